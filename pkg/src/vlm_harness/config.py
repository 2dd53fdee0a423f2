"""Domain types and the line-oriented run-configuration format.

A run configuration names an image directory, an output CSV, a backend
endpoint, shared generation parameters, and between 1 and 10 tasks.  The
on-disk format is line oriented: a single ``[global]`` section followed by one
``[task]`` section per task, with ``key = value`` pairs.  Multi-line values
(role text, task wording, background theory) use triple-quoted blocks::

    role = \"\"\"
    You are an expert urban analyst.
    Look carefully at the whole scene.
    \"\"\"

Unknown keys, unknown sections, and out-of-range values are rejected with a
diagnostic naming the offending field.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path

# Column names generated next to a task's value column.  A task column must
# not contain any of these, otherwise two tasks could collide in the CSV.
RESERVED_SUFFIXES = ("_consensus", "_agreement", "_runs", "_reasoning", "_truncated")

BACKEND_KINDS = ("llava-style", "qwen-style", "generic")

MAX_TASKS = 10
RUNS_MIN = 2
RUNS_MAX = 5
MAX_TOKEN_CEILING = 1500
# Token budget forced while the chain-of-thought directive is active; the
# budget must hold the full written-out reasoning, not just the answer.
REASONING_TOKEN_BUDGET = 1024

DEFAULT_MODEL_NAME = "default"
DEFAULT_REQUEST_TIMEOUT = 60.0
DEFAULT_MAX_RETRIES = 2

_IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")

_GLOBAL_KEYS = frozenset(
    {
        "image_dir",
        "output_csv",
        "backend_url",
        "backend_kind",
        "role",
        "temperature",
        "top_p",
        "max_tokens",
        "seed",
        "parallel_images",
    }
)
_TASK_KEYS = frozenset(
    {
        "column",
        "task",
        "theory",
        "format",
        "type",
        "consensus",
        "runs",
        "tolerance_pct",
        "reasoning",
    }
)


class ConfigError(ValueError):
    """Raised for syntax or validation problems in a run configuration."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TaskType(enum.Enum):
    NUMERIC = "numeric"
    CATEGORY = "category"
    BOOLEAN = "boolean"
    TEXT = "text"


@dataclass(frozen=True)
class TaskSpec:
    """One benchmark question asked of every image."""

    column: str
    task_type: TaskType
    task: str = ""
    theory: str = ""
    format: str = ""
    role: str = ""  # overrides the global role when non-empty
    consensus_enabled: bool = False
    n_runs: int = 2
    numeric_tolerance_pct: float = 0.0
    reasoning_enabled: bool = False

    def __post_init__(self) -> None:
        if not self.column:
            raise ConfigError("task column must be non-empty")
        if not _IDENTIFIER_RE.match(self.column):
            raise ConfigError(
                f"task column {self.column!r} must be an identifier "
                "(letters, digits, underscore; no commas, quotes or newlines)"
            )
        if self.column == "image":
            raise ConfigError("task column 'image' is reserved for the row key")
        for suffix in RESERVED_SUFFIXES:
            if suffix in self.column:
                raise ConfigError(
                    f"task column {self.column!r} contains reserved suffix {suffix!r}"
                )
        if not isinstance(self.task_type, TaskType):
            raise ConfigError(f"task {self.column!r}: unknown type {self.task_type!r}")
        if not RUNS_MIN <= self.n_runs <= RUNS_MAX:
            raise ConfigError(
                f"task {self.column!r}: runs must be in [{RUNS_MIN},{RUNS_MAX}] "
                f"(got {self.n_runs})"
            )
        if self.numeric_tolerance_pct < 0:
            raise ConfigError(
                f"task {self.column!r}: tolerance_pct must be >= 0 "
                f"(got {self.numeric_tolerance_pct})"
            )
        if self.numeric_tolerance_pct and self.task_type is not TaskType.NUMERIC:
            raise ConfigError(
                f"task {self.column!r}: tolerance_pct requires type numeric"
            )


@dataclass(frozen=True)
class GenerationParams:
    """Decoding parameters shared by every request of a run."""

    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 50
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0 (got {self.temperature})")
        if not 0 < self.top_p <= 1:
            raise ConfigError(f"top_p must be in (0,1] (got {self.top_p})")
        if not 1 <= self.max_tokens <= MAX_TOKEN_CEILING:
            raise ConfigError(
                f"max_tokens must be in [1,{MAX_TOKEN_CEILING}] (got {self.max_tokens})"
            )
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"seed must be >= 0 (got {self.seed})")


@dataclass(frozen=True)
class BackendSpec:
    """Where and how to reach the inference endpoint."""

    url: str
    kind: str = "generic"
    model_name: str = DEFAULT_MODEL_NAME
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self) -> None:
        if not self.url:
            raise ConfigError("backend_url must be non-empty")
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(
                f"backend_kind must be one of {', '.join(BACKEND_KINDS)} "
                f"(got {self.kind!r})"
            )
        if self.request_timeout <= 0:
            raise ConfigError(f"timeout must be > 0 (got {self.request_timeout})")
        if self.max_retries < 0:
            raise ConfigError(f"retries must be >= 0 (got {self.max_retries})")


@dataclass(frozen=True)
class RunConfig:
    """A fully validated benchmark run. Immutable once loaded."""

    image_dir: Path
    output_csv: Path
    backend: BackendSpec
    tasks: tuple[TaskSpec, ...]
    global_role: str = ""
    params: GenerationParams = field(default_factory=GenerationParams)
    parallel_images: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ConfigError("empty task list: at least one [task] section required")
        if len(self.tasks) > MAX_TASKS:
            raise ConfigError(
                f"too many tasks: at most {MAX_TASKS} allowed (got {len(self.tasks)})"
            )
        seen: set[str] = set()
        for task in self.tasks:
            if task.column in seen:
                raise ConfigError(f"duplicate column {task.column!r}")
            seen.add(task.column)
        if self.parallel_images < 1:
            raise ConfigError(
                f"parallel_images must be >= 1 (got {self.parallel_images})"
            )


def effective_max_tokens(task: TaskSpec, params: GenerationParams) -> int:
    """Token budget for one request of ``task``.

    Reasoning mode overrides the configured budget: a chain of thought does
    not fit in a short-answer allowance, so the budget is pinned to
    ``REASONING_TOKEN_BUDGET`` regardless of ``params.max_tokens``.
    """
    if task.reasoning_enabled:
        return REASONING_TOKEN_BUDGET
    return params.max_tokens


# ---------------------------------------------------------------------------
# document parsing


def _parse_sections(text: str) -> list[dict]:
    """Split a config document into sections of raw key/value pairs.

    Returns a list of ``{"name": ..., "line": ..., "keys": {key: (value, line)}}``
    in document order.  Triple-quoted blocks keep their inner lines verbatim.
    """
    sections: list[dict] = []
    current: dict | None = None
    lines = text.split("\n")
    i = 0
    while i < len(lines):
        raw = lines[i]
        line_no = i + 1
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            i += 1
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in ("global", "task"):
                raise ConfigError(f"unknown section [{name}]", line_no)
            current = {"name": name, "line": line_no, "keys": {}}
            sections.append(current)
            i += 1
            continue
        if "=" not in raw:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", line_no)
        if current is None:
            raise ConfigError("key assignment outside of any section", line_no)
        key, _, value = raw.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"malformed key {key!r}", line_no)
        if value.startswith('"""'):
            rest = value[3:]
            if rest.endswith('"""') and len(rest) >= 3:
                value = rest[:-3]
                i += 1
            elif rest:
                raise ConfigError(
                    "text after an opening triple quote must close on the same line",
                    line_no,
                )
            else:
                block: list[str] = []
                i += 1
                while True:
                    if i >= len(lines):
                        raise ConfigError("unterminated triple-quoted block", line_no)
                    if lines[i].strip() == '"""':
                        break
                    block.append(lines[i])
                    i += 1
                value = "\n".join(block)
                i += 1
        else:
            i += 1
        if key in current["keys"]:
            raise ConfigError(f"duplicate key {key!r}", line_no)
        current["keys"][key] = (value, line_no)
    return sections


def _checked_keys(section: dict, allowed: frozenset) -> dict:
    keys = section["keys"]
    for key, (_, line_no) in keys.items():
        if key not in allowed:
            raise ConfigError(
                f"unknown key {key!r} in [{section['name']}] section", line_no
            )
    return keys


def _get(keys: dict, name: str, default: str | None = None) -> str | None:
    if name in keys:
        return keys[name][0]
    return default


def _line(keys: dict, name: str) -> int | None:
    return keys[name][1] if name in keys else None


def _as_float(keys: dict, name: str) -> float:
    raw = keys[name][0]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number (got {raw!r})", _line(keys, name))


def _as_int(keys: dict, name: str) -> int:
    raw = keys[name][0]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer (got {raw!r})", _line(keys, name))


def _as_bool(keys: dict, name: str) -> bool:
    raw = keys[name][0].lower()
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise ConfigError(
        f"{name} must be 'true' or 'false' (got {keys[name][0]!r})", _line(keys, name)
    )


def _build_task(section: dict) -> TaskSpec:
    keys = _checked_keys(section, _TASK_KEYS)
    line_no = section["line"]
    column = _get(keys, "column")
    if column is None:
        raise ConfigError("task is missing required key 'column'", line_no)
    type_raw = _get(keys, "type")
    if type_raw is None:
        raise ConfigError(f"task {column!r} is missing required key 'type'", line_no)
    try:
        task_type = TaskType(type_raw)
    except ValueError:
        raise ConfigError(
            f"task {column!r}: type must be one of "
            f"{', '.join(t.value for t in TaskType)} (got {type_raw!r})",
            _line(keys, "type"),
        )
    try:
        return TaskSpec(
            column=column,
            task_type=task_type,
            task=_get(keys, "task", ""),
            theory=_get(keys, "theory", ""),
            format=_get(keys, "format", ""),
            consensus_enabled=_as_bool(keys, "consensus") if "consensus" in keys else False,
            n_runs=_as_int(keys, "runs") if "runs" in keys else RUNS_MIN,
            numeric_tolerance_pct=(
                _as_float(keys, "tolerance_pct") if "tolerance_pct" in keys else 0.0
            ),
            reasoning_enabled=_as_bool(keys, "reasoning") if "reasoning" in keys else False,
        )
    except ConfigError as exc:
        if exc.line is None:
            raise ConfigError(str(exc), line_no) from None
        raise


def load_config(text: str) -> RunConfig:
    """Parse and validate a configuration document into a :class:`RunConfig`."""
    sections = _parse_sections(text)
    globals_ = [s for s in sections if s["name"] == "global"]
    task_sections = [s for s in sections if s["name"] == "task"]
    if not globals_:
        raise ConfigError("missing [global] section")
    if len(globals_) > 1:
        raise ConfigError("more than one [global] section", globals_[1]["line"])
    keys = _checked_keys(globals_[0], _GLOBAL_KEYS)
    for required in ("image_dir", "output_csv", "backend_url"):
        if required not in keys:
            raise ConfigError(f"[global] is missing required key {required!r}")
    if not task_sections:
        raise ConfigError("empty task list: at least one [task] section required")

    backend = BackendSpec(
        url=_get(keys, "backend_url"),
        kind=_get(keys, "backend_kind", "generic"),
    )
    params = GenerationParams(
        temperature=_as_float(keys, "temperature") if "temperature" in keys else 0.0,
        top_p=_as_float(keys, "top_p") if "top_p" in keys else 1.0,
        max_tokens=_as_int(keys, "max_tokens") if "max_tokens" in keys else 50,
        seed=_as_int(keys, "seed") if "seed" in keys else None,
    )
    tasks = tuple(_build_task(section) for section in task_sections)
    return RunConfig(
        image_dir=Path(_get(keys, "image_dir")),
        output_csv=Path(_get(keys, "output_csv")),
        backend=backend,
        tasks=tasks,
        global_role=_get(keys, "role", ""),
        params=params,
        parallel_images=(
            _as_int(keys, "parallel_images") if "parallel_images" in keys else 1
        ),
    )


def load_config_file(path: Path | str) -> RunConfig:
    return load_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# rendering


def _emit(lines: list[str], key: str, value: str) -> None:
    if '"""' in value:
        raise ConfigError(f"{key}: values may not contain a triple quote sequence")
    if "\n" in value or value != value.strip():
        lines.append(f'{key} = """')
        lines.extend(value.split("\n"))
        lines.append('"""')
    else:
        lines.append(f"{key} = {value}")


def render_config(config: RunConfig) -> str:
    """Write ``config`` back out in the documented format.

    ``load_config(render_config(c))`` returns an equal :class:`RunConfig` for
    every config expressible in the format.  Fields the format cannot carry
    (per-task role overrides, a non-default backend model name, timeout or
    retry count) raise; those are runtime-only knobs set through the CLI.
    """
    backend = config.backend
    if (
        backend.model_name != DEFAULT_MODEL_NAME
        or backend.request_timeout != DEFAULT_REQUEST_TIMEOUT
        or backend.max_retries != DEFAULT_MAX_RETRIES
    ):
        raise ConfigError(
            "backend model name, timeout and retries cannot be expressed in the "
            "config format; pass them on the command line instead"
        )
    lines: list[str] = ["[global]"]
    _emit(lines, "image_dir", str(config.image_dir))
    _emit(lines, "output_csv", str(config.output_csv))
    _emit(lines, "backend_url", backend.url)
    _emit(lines, "backend_kind", backend.kind)
    _emit(lines, "role", config.global_role)
    _emit(lines, "temperature", repr(config.params.temperature))
    _emit(lines, "top_p", repr(config.params.top_p))
    _emit(lines, "max_tokens", str(config.params.max_tokens))
    if config.params.seed is not None:
        _emit(lines, "seed", str(config.params.seed))
    _emit(lines, "parallel_images", str(config.parallel_images))
    for task in config.tasks:
        if task.role:
            raise ConfigError(
                f"task {task.column!r}: per-task role cannot be expressed in the "
                "config format"
            )
        lines.append("")
        lines.append("[task]")
        _emit(lines, "column", task.column)
        _emit(lines, "type", task.task_type.value)
        _emit(lines, "task", task.task)
        _emit(lines, "theory", task.theory)
        _emit(lines, "format", task.format)
        _emit(lines, "consensus", "true" if task.consensus_enabled else "false")
        _emit(lines, "runs", str(task.n_runs))
        _emit(lines, "tolerance_pct", repr(task.numeric_tolerance_pct))
        _emit(lines, "reasoning", "true" if task.reasoning_enabled else "false")
    return "\n".join(lines) + "\n"
