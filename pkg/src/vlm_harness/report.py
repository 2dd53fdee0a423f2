"""Evaluation reports: results CSV + ground truth CSV -> metric tables.

The report config reuses the line-oriented section format: one ``[task]``
section per evaluated column with keys ``column``, ``kind`` (binary, count,
continuous or ordinal), optional ``range`` (proximity normalization; defaults
to the observed spread of the human values) and ``classes`` (required for
ordinal kinds).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .batch import NA_CELL, ResultsTable
from .config import ConfigError, _checked_keys, _get, _parse_sections
from .metrics import (
    binary_metrics,
    continuous_metrics,
    count_metrics,
    ordinal_metrics,
    proximity,
)

EVAL_KINDS = ("binary", "count", "continuous", "ordinal")

_REPORT_TASK_KEYS = frozenset({"column", "kind", "range", "classes"})


class ReportError(ValueError):
    """Raised when results, truth and report config do not line up."""


@dataclass(frozen=True)
class ReportTask:
    column: str
    kind: str
    value_range: float | None = None
    num_classes: int | None = None


@dataclass
class TaskEvaluation:
    kind: str
    metrics: dict[str, float]
    proximity: float
    value_range: float
    n_evaluated: int
    n_na: int


@dataclass
class MetricReport:
    tasks: dict[str, TaskEvaluation]
    overall_proximity: float
    na_rate: float
    truncation_rate: float


def load_report_config(text: str) -> list[ReportTask]:
    sections = _parse_sections(text)
    tasks: list[ReportTask] = []
    for section in sections:
        if section["name"] != "task":
            raise ConfigError(
                "report config allows only [task] sections", section["line"]
            )
        keys = _checked_keys(section, _REPORT_TASK_KEYS)
        column = _get(keys, "column")
        kind = _get(keys, "kind")
        if not column:
            raise ConfigError("report task is missing 'column'", section["line"])
        if kind not in EVAL_KINDS:
            raise ConfigError(
                f"task {column!r}: kind must be one of {', '.join(EVAL_KINDS)} "
                f"(got {kind!r})",
                section["line"],
            )
        value_range = None
        if "range" in keys:
            value_range = float(_get(keys, "range"))
            if value_range <= 0:
                raise ConfigError(
                    f"task {column!r}: range must be positive", section["line"]
                )
        num_classes = None
        if "classes" in keys:
            num_classes = int(_get(keys, "classes"))
        if kind == "ordinal" and num_classes is None:
            raise ConfigError(
                f"task {column!r}: ordinal kind requires 'classes'", section["line"]
            )
        tasks.append(ReportTask(column, kind, value_range, num_classes))
    if not tasks:
        raise ConfigError("report config defines no [task] sections")
    return tasks


def load_truth(path: Path) -> dict[str, dict[str, float]]:
    """Ground truth CSV: an ``image`` key column plus one column per task."""
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[0] != "image":
            raise ReportError(f"{path}: first column must be 'image'")
        truth: dict[str, dict[str, float]] = {}
        for record in reader:
            if len(record) != len(header):
                raise ReportError(f"{path}: malformed row {record[:1]!r}")
            values: dict[str, float] = {}
            for column, cell in zip(header[1:], record[1:]):
                if cell.strip() == "":
                    continue
                try:
                    values[column] = float(cell)
                except ValueError:
                    raise ReportError(
                        f"{path}: non-numeric truth value {cell!r} for "
                        f"column {column!r}"
                    ) from None
            truth[record[0]] = values
    return truth


def reliability_rates(table: ResultsTable, columns: list[str]) -> dict[str, float]:
    """NA rate over individual runs and truncation rate over task cells.

    Consensus tasks contribute every entry of their ``{col}_runs`` list; a
    task without a runs column contributes its single value cell.  Cells that
    were never executed (empty) do not count either way.
    """
    total_runs = 0
    na_runs = 0
    truncated = 0
    truncation_cells = 0
    header = set(table.header)
    for column in columns:
        runs_column = column + "_runs"
        truncated_column = column + "_truncated"
        for row in table.rows:
            if runs_column in header:
                cell = row.cells.get(runs_column, "")
                if cell:
                    entries = cell.split(";")
                    total_runs += len(entries)
                    na_runs += sum(1 for entry in entries if entry == NA_CELL)
            else:
                cell = row.cells.get(column, "")
                if cell:
                    total_runs += 1
                    na_runs += 1 if cell == NA_CELL else 0
            if truncated_column in header:
                cell = row.cells.get(truncated_column, "")
                if cell:
                    truncation_cells += 1
                    truncated += 1 if cell == "1" else 0
    return {
        "na_rate": na_runs / total_runs if total_runs else 0.0,
        "truncation_rate": truncated / truncation_cells if truncation_cells else 0.0,
    }


def _predictions(table: ResultsTable, column: str) -> dict[str, float | None]:
    if column not in table.header:
        raise ReportError(f"results file has no column {column!r}")
    out: dict[str, float | None] = {}
    for row in table.rows:
        cell = row.cells.get(column, "")
        if cell == "" or cell == NA_CELL:
            out[row.image] = None
            continue
        try:
            out[row.image] = float(cell)
        except ValueError:
            raise ReportError(
                f"column {column!r} holds non-numeric value {cell!r} for "
                f"image {row.image!r}"
            ) from None
    return out


def build_report(
    table: ResultsTable,
    truth: dict[str, dict[str, float]],
    report_tasks: list[ReportTask],
) -> MetricReport:
    """Pair predictions with truth image-by-image and compute all metrics."""
    for row in table.rows:
        if row.image not in truth:
            raise ReportError(f"image {row.image!r} is not present in the ground truth")

    evaluations: dict[str, TaskEvaluation] = {}
    for spec in report_tasks:
        predictions = _predictions(table, spec.column)
        truths: list[float] = []
        predicted: list[float] = []
        n_na = 0
        for row in table.rows:
            truth_value = truth[row.image].get(spec.column)
            if truth_value is None:
                raise ReportError(
                    f"ground truth has no value for image {row.image!r}, "
                    f"column {spec.column!r}"
                )
            prediction = predictions[row.image]
            if prediction is None:
                n_na += 1
                continue
            truths.append(truth_value)
            predicted.append(prediction)
        if not truths:
            raise ReportError(f"task {spec.column!r}: no evaluated pairs")

        value_range = spec.value_range
        if value_range is None:
            value_range = max(truths) - min(truths)
            if value_range <= 0:
                raise ReportError(
                    f"task {spec.column!r}: constant ground truth; "
                    "set an explicit range"
                )

        if spec.kind == "binary":
            values = {"truth": [int(t) for t in truths], "pred": [int(p) for p in predicted]}
            for side in values.values():
                for v in side:
                    if v not in (0, 1):
                        raise ReportError(
                            f"task {spec.column!r}: binary values must be 0/1"
                        )
            metric_values = binary_metrics(values["truth"], values["pred"])
        elif spec.kind == "count":
            metric_values = count_metrics(truths, predicted)
        elif spec.kind == "continuous":
            metric_values = continuous_metrics(truths, predicted)
        else:
            metric_values = ordinal_metrics(
                [int(t) for t in truths], [int(p) for p in predicted], spec.num_classes
            )

        score = sum(proximity(t, p, value_range) for t, p in zip(truths, predicted))
        evaluations[spec.column] = TaskEvaluation(
            kind=spec.kind,
            metrics=metric_values,
            proximity=score / len(truths),
            value_range=value_range,
            n_evaluated=len(truths),
            n_na=n_na,
        )

    rates = reliability_rates(table, [spec.column for spec in report_tasks])
    overall = sum(ev.proximity for ev in evaluations.values()) / len(evaluations)
    return MetricReport(
        tasks=evaluations,
        overall_proximity=overall,
        na_rate=rates["na_rate"],
        truncation_rate=rates["truncation_rate"],
    )


_PERCENT_METRICS = frozenset(
    {"accuracy", "sensitivity", "specificity", "exact", "within1", "within2",
     "within10m", "within1class"}
)


def _format_metric(name: str, value: float) -> str:
    if math.isnan(value):
        return NA_CELL
    if name in _PERCENT_METRICS:
        return f"{value * 100.0:.1f}%"
    return f"{value:.2f}"


def render_report_text(report: MetricReport, model_name: str = "model") -> str:
    """Human-readable tables: one block per task, then ranking and totals."""
    lines: list[str] = []
    for column, evaluation in report.tasks.items():
        lines.append(f"Task: {column} ({evaluation.kind})")
        lines.append(f"  n_evaluated    : {evaluation.n_evaluated}")
        lines.append(f"  n_na           : {evaluation.n_na}")
        lines.append(f"  range          : {evaluation.value_range:g}")
        for name, value in evaluation.metrics.items():
            lines.append(f"  {name:<15}: {_format_metric(name, value)}")
        lines.append(f"  proximity      : {evaluation.proximity * 100.0:.1f}%")
        lines.append("")
    lines.append("Ranking")
    lines.append(
        f"  1. {model_name}  mean proximity {report.overall_proximity * 100.0:.1f}%"
    )
    lines.append("")
    lines.append(f"Overall proximity : {report.overall_proximity * 100.0:.1f}%")
    lines.append(f"NA rate           : {report.na_rate * 100.0:.1f}%")
    lines.append(f"Truncation rate   : {report.truncation_rate * 100.0:.1f}%")
    return "\n".join(lines) + "\n"


def report_metric_rows(report: MetricReport) -> list[tuple[str, str, float]]:
    """Flat (task, metric, value) triples for the machine-readable CSV."""
    rows: list[tuple[str, str, float]] = []
    for column, evaluation in report.tasks.items():
        for name, value in evaluation.metrics.items():
            rows.append((column, name, value))
        rows.append((column, "proximity", evaluation.proximity))
        rows.append((column, "n_evaluated", float(evaluation.n_evaluated)))
        rows.append((column, "n_na", float(evaluation.n_na)))
    rows.append(("overall", "proximity", report.overall_proximity))
    rows.append(("overall", "na_rate", report.na_rate))
    rows.append(("overall", "truncation_rate", report.truncation_rate))
    return rows


def write_metric_csv(path: Path, report: MetricReport) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["task", "metric", "value"])
        for task, metric, value in report_metric_rows(report):
            writer.writerow([task, metric, NA_CELL if math.isnan(value) else repr(value)])
