"""Config-driven benchmark harness for vision-language models.

The harness loads a run configuration, asks a chat-completions endpoint every
configured question about every image in a directory, validates repeated runs
by majority vote, persists a resumable CSV, and scores the results against
human ground truth.
"""

from .backend import (
    BackendError,
    ImageRef,
    InferenceClient,
    RawInference,
    TransportError,
    clean_output,
)
from .batch import (
    BatchResult,
    ResultsTable,
    list_images,
    read_table,
    resume_plan,
    run_batch,
    serialize_value,
    write_table,
)
from .config import (
    BackendSpec,
    ConfigError,
    GenerationParams,
    RunConfig,
    TaskSpec,
    TaskType,
    effective_max_tokens,
    load_config,
    load_config_file,
    render_config,
)
from .consensus import ConsensusOutcome, compute_consensus
from .metrics import (
    binary_metrics,
    continuous_metrics,
    count_metrics,
    ordinal_metrics,
    pearson_r,
    proximity,
    rank_models,
    task_proximity,
)
from .mockserver import FixtureEntry, load_fixtures, parse_fixtures, serve_mock
from .parsing import (
    NA,
    ParsedValue,
    parse_boolean,
    parse_category,
    parse_numeric,
    parse_reasoning,
    parse_text,
    parse_value,
)
from .prompt import PromptText, build_prompt, cot_directive
from .report import (
    MetricReport,
    ReportError,
    build_report,
    load_report_config,
    load_truth,
    reliability_rates,
    render_report_text,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "BackendSpec",
    "BatchResult",
    "ConfigError",
    "ConsensusOutcome",
    "FixtureEntry",
    "GenerationParams",
    "ImageRef",
    "InferenceClient",
    "MetricReport",
    "NA",
    "ParsedValue",
    "PromptText",
    "RawInference",
    "ReportError",
    "ResultsTable",
    "RunConfig",
    "TaskSpec",
    "TaskType",
    "TransportError",
    "binary_metrics",
    "build_prompt",
    "build_report",
    "clean_output",
    "compute_consensus",
    "continuous_metrics",
    "cot_directive",
    "count_metrics",
    "effective_max_tokens",
    "list_images",
    "load_config",
    "load_config_file",
    "load_fixtures",
    "load_report_config",
    "load_truth",
    "ordinal_metrics",
    "parse_boolean",
    "parse_category",
    "parse_fixtures",
    "parse_numeric",
    "parse_reasoning",
    "parse_text",
    "parse_value",
    "pearson_r",
    "proximity",
    "rank_models",
    "read_table",
    "reliability_rates",
    "render_config",
    "render_report_text",
    "resume_plan",
    "run_batch",
    "serialize_value",
    "serve_mock",
    "task_proximity",
    "write_table",
]
