"""Command-line entry points.

Usage:
    vlm-harness run <config> [--fresh] [--parallel N] [backend overrides]
    vlm-harness report <results.csv> <truth.csv> <report.cfg> [--out-dir DIR]
    vlm-harness validate <config>
    vlm-harness mock-serve <fixtures> <port>

Results and summaries go to stdout, logs and warnings to stderr.  Exit code 0
on success, 1 for usage or configuration errors, 2 for a runtime failure that
left a valid partial results file behind (rerun the same command to resume).
The ``VLM_HARNESS_BACKEND_URL`` environment variable overrides the backend
URL from the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import threading
from pathlib import Path

from .backend import InferenceClient
from .batch import ResultsFileError, read_table, run_batch
from .config import ConfigError, load_config_file, render_config
from .mockserver import FixtureError, serve_mock
from .report import (
    ReportError,
    build_report,
    load_report_config,
    load_truth,
    render_report_text,
    write_metric_csv,
)

BACKEND_URL_ENV = "VLM_HARNESS_BACKEND_URL"

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlm-harness",
        description="Benchmark vision-language models behind chat-completions endpoints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute (or resume) a benchmark run")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--fresh", action="store_true",
                       help="discard an existing output CSV instead of resuming")
    run_p.add_argument("--parallel", type=int, metavar="N",
                       help="process up to N images concurrently")
    run_p.add_argument("--backend-url", help="override the configured backend URL")
    run_p.add_argument("--backend-kind", help="override the configured backend kind")
    run_p.add_argument("--timeout", type=float, help="per-request timeout in seconds")
    run_p.add_argument("--retries", type=int, help="transport retries per request")
    run_p.add_argument("--model-name", help="model name sent with each request")

    report_p = sub.add_parser("report", help="evaluate results against ground truth")
    report_p.add_argument("results", type=Path)
    report_p.add_argument("truth", type=Path)
    report_p.add_argument("report_cfg", type=Path)
    report_p.add_argument("--out-dir", type=Path,
                          help="where to write report.txt and report_metrics.csv "
                               "(default: next to the results file)")

    validate_p = sub.add_parser("validate", help="check a config and print its normalized form")
    validate_p.add_argument("config", type=Path)

    mock_p = sub.add_parser("mock-serve", help="serve scripted fixtures over the wire protocol")
    mock_p.add_argument("fixtures", type=Path)
    mock_p.add_argument("port", type=int)
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config_file(args.config)

    backend = config.backend
    url_override = args.backend_url or os.environ.get(BACKEND_URL_ENV)
    overrides = {}
    if url_override:
        overrides["url"] = url_override
    if args.backend_kind:
        overrides["kind"] = args.backend_kind
    if args.timeout is not None:
        overrides["request_timeout"] = args.timeout
    if args.retries is not None:
        overrides["max_retries"] = args.retries
    if args.model_name:
        overrides["model_name"] = args.model_name
    if overrides:
        backend = dataclasses.replace(backend, **overrides)
    if args.parallel is not None:
        config = dataclasses.replace(config, backend=backend, parallel_images=args.parallel)
    else:
        config = dataclasses.replace(config, backend=backend)

    if args.fresh and config.output_csv.exists():
        config.output_csv.unlink()

    client = InferenceClient(backend)

    def on_image(done: int, total: int, image: str) -> None:
        print(f"[{done}/{total}] {image}", flush=True)

    try:
        result = run_batch(config, client=client, on_image=on_image)
    except (ConfigError, ResultsFileError):
        raise  # pre-flight problems, nothing was executed
    except Exception as exc:  # partial results stay on disk and are resumable
        print(f"error: {exc}", file=sys.stderr)
        print(
            f"run aborted; partial results kept at {config.output_csv} "
            "(rerun to resume)",
            file=sys.stderr,
        )
        return 2

    stats = result.stats
    print(f"{stats.scheduled} images scheduled")
    print(
        f"processed {stats.processed} image(s), "
        f"{stats.na_cells} NA cell(s), {stats.truncated_cells} truncated cell(s)"
    )
    print(f"results written to {config.output_csv}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    table = read_table(args.results)
    truth = load_truth(args.truth)
    report_tasks = load_report_config(args.report_cfg.read_text(encoding="utf-8"))
    report = build_report(table, truth, report_tasks)

    out_dir = args.out_dir if args.out_dir is not None else args.results.parent
    text = render_report_text(report, model_name=args.results.stem)
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    write_metric_csv(out_dir / "report_metrics.csv", report)

    print(text, end="")
    print(f"Report written to {out_dir / 'report.txt'}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config_file(args.config)
    print(render_config(config), end="")
    return 0


def _cmd_mock_serve(args: argparse.Namespace) -> int:
    handle = serve_mock(args.fixtures, args.port)
    print(f"mock backend listening on {handle.url}", file=sys.stderr)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        handle.stop()
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "report": _cmd_report,
        "validate": _cmd_validate,
        "mock-serve": _cmd_mock_serve,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ReportError, FixtureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
