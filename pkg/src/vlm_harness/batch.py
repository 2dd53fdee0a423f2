"""Batch execution over an image directory with resumable CSV persistence.

One row per image.  Per task the layout is ``{col}``, ``{col}_reasoning``
(reasoning tasks), ``{col}_consensus``, ``{col}_agreement``, ``{col}_runs``
(consensus tasks), and ``{col}_truncated`` — in that order on a fresh run.
Failed runs record the literal ``NA``; an empty cell means "never executed",
which is what resume looks for.  Completed rows are appended as each image
finishes (crash safety) and the file is rewritten sorted by image name when
the run completes, so two runs with the same fixtures and seed produce
byte-identical output.
"""

from __future__ import annotations

import csv
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .backend import BackendError, ImageRef, InferenceClient, clean_output
from .config import ConfigError, RunConfig, TaskSpec, effective_max_tokens
from .consensus import compute_consensus
from .parsing import ParsedValue, parse_reasoning, parse_value
from .prompt import build_prompt

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png")
NA_CELL = "NA"


def list_images(directory: Path) -> list[ImageRef]:
    """Images in ``directory`` (jpg/jpeg/png, case-insensitive), sorted by name bytes."""
    if not directory.is_dir():
        raise ConfigError(f"image_dir {str(directory)!r} does not exist")
    refs = []
    for path in directory.iterdir():
        if path.is_file() and path.suffix.lower() in IMAGE_EXTENSIONS:
            refs.append(ImageRef.from_path(path))
    refs.sort(key=lambda ref: ref.file_name.encode("utf-8"))
    return refs


def expected_columns(task: TaskSpec) -> list[str]:
    columns = [task.column]
    if task.reasoning_enabled:
        columns.append(task.column + "_reasoning")
    if task.consensus_enabled:
        columns.extend(
            [task.column + "_consensus", task.column + "_agreement", task.column + "_runs"]
        )
    columns.append(task.column + "_truncated")
    return columns


def fresh_header(tasks: Sequence[TaskSpec]) -> list[str]:
    header = ["image"]
    for task in tasks:
        header.extend(expected_columns(task))
    return header


@dataclass
class ResultsRow:
    image: str
    cells: dict[str, str] = field(default_factory=dict)


@dataclass
class ResultsTable:
    header: list[str]
    rows: list[ResultsRow] = field(default_factory=list)

    def row_for(self, image: str) -> ResultsRow | None:
        for row in self.rows:
            if row.image == image:
                return row
        return None

    def sort(self) -> None:
        self.rows.sort(key=lambda row: row.image.encode("utf-8"))

    def as_record(self, row: ResultsRow) -> list[str]:
        return [row.image] + [row.cells.get(column, "") for column in self.header[1:]]


class ResultsFileError(ValueError):
    """Raised when an existing results file cannot be resumed."""


def read_table(path: Path) -> ResultsTable:
    """Read a results CSV, tolerating an interrupted previous run.

    Rows whose field count does not match the header (torn final append) are
    dropped; a duplicate image keeps its last occurrence, which is the most
    recently appended update.
    """
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise ResultsFileError(f"{path}: results file is empty")
        if header[0] != "image":
            raise ResultsFileError(f"{path}: first column must be 'image'")
        if len(set(header)) != len(header):
            raise ResultsFileError(f"{path}: duplicate column names in header")
        by_image: dict[str, ResultsRow] = {}
        order: list[str] = []
        for record in reader:
            if len(record) != len(header):
                log.warning("%s: skipping malformed row %r", path, record[:1])
                continue
            image = record[0]
            if image not in by_image:
                order.append(image)
            by_image[image] = ResultsRow(
                image=image, cells=dict(zip(header[1:], record[1:]))
            )
    return ResultsTable(header=list(header), rows=[by_image[name] for name in order])


def write_table(path: Path, table: ResultsTable) -> None:
    """Atomically rewrite the results file, rows sorted by image name."""
    table.sort()
    fd, tmp_name = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(table.header)
            for row in table.rows:
                writer.writerow(table.as_record(row))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


@dataclass(frozen=True)
class WorkItem:
    image: ImageRef
    tasks: tuple[TaskSpec, ...]


def resume_plan(existing_csv: Path, config: RunConfig) -> tuple[ResultsTable, list[WorkItem]]:
    """Work out what is left to do given a previous output file.

    An image whose row has a non-empty value cell for every configured task is
    skipped (``NA`` counts as processed — transient failures are not retried
    implicitly).  Tasks whose columns are missing from the file get their
    column group appended to the header and are scheduled for every image.
    Cells already present are never touched.
    """
    table = read_table(existing_csv)
    present = set(table.header)
    new_tasks: list[TaskSpec] = []
    for task in config.tasks:
        group = expected_columns(task)
        found = [column for column in group if column in present]
        if not found:
            new_tasks.append(task)
        elif len(found) != len(group):
            missing = sorted(set(group) - set(found))
            raise ResultsFileError(
                f"{existing_csv}: column group for task {task.column!r} is "
                f"incomplete (missing {', '.join(missing)}); the file was "
                "produced by an incompatible task layout — use a fresh output path"
            )
    for task in new_tasks:
        table.header.extend(expected_columns(task))

    work: list[WorkItem] = []
    for image in list_images(config.image_dir):
        row = table.row_for(image.file_name)
        if row is None:
            pending = tuple(config.tasks)
        else:
            pending = tuple(
                task
                for task in config.tasks
                if task in new_tasks or row.cells.get(task.column, "") == ""
            )
        if pending:
            work.append(WorkItem(image=image, tasks=pending))
    return table, work


def serialize_value(value: ParsedValue) -> str:
    """CSV form of one parsed value: booleans 1/0, NA literal, bare integers."""
    v = value.value
    if v is None:
        return NA_CELL
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return str(int(v)) if v.is_integer() else str(v)
    return str(v)


@dataclass
class BatchStats:
    scheduled: int = 0
    processed: int = 0
    na_cells: int = 0
    truncated_cells: int = 0
    interrupted: bool = False


@dataclass
class BatchResult:
    table: ResultsTable
    stats: BatchStats


def _run_task(
    client: InferenceClient,
    config: RunConfig,
    image: ImageRef,
    task: TaskSpec,
) -> dict[str, str]:
    """Execute one task for one image and return its cells."""
    prompt = build_prompt(task, config.global_role)
    token_limit = effective_max_tokens(task, config.params)
    n_runs = task.n_runs if task.consensus_enabled else 1
    runs: list[ParsedValue] = []
    truncated_any = False
    first_trace: str | None = None
    for run_index in range(n_runs):
        try:
            raw = client.infer(prompt, image, config.params, token_limit)
        except BackendError as exc:
            log.warning(
                "image=%s task=%s run=%d/%d failed: %s",
                image.file_name, task.column, run_index + 1, n_runs, exc,
            )
            runs.append(ParsedValue(None))
            continue
        cleaned = clean_output(raw, prompt)
        if task.reasoning_enabled:
            parsed = parse_reasoning(cleaned, task.task_type)
        else:
            parsed = parse_value(cleaned, task.task_type)
        if raw.truncated():
            truncated_any = True
            log.warning(
                "image=%s task=%s run=%d/%d hit the %d-token limit",
                image.file_name, task.column, run_index + 1, n_runs, token_limit,
            )
        if run_index == 0 and parsed.reasoning_trace is not None:
            first_trace = parsed.reasoning_trace
        log.info(
            "image=%s task=%s run=%d/%d value=%s tokens=%d/%d",
            image.file_name, task.column, run_index + 1, n_runs,
            serialize_value(parsed), raw.generated_tokens, token_limit,
        )
        runs.append(parsed)

    cells: dict[str, str] = {}
    if task.consensus_enabled:
        outcome = compute_consensus(runs, task.task_type, task.numeric_tolerance_pct)
        cells[task.column] = serialize_value(outcome.value)
        cells[task.column + "_consensus"] = cells[task.column]
        cells[task.column + "_agreement"] = f"{outcome.agreement_ratio:.2f}"
        cells[task.column + "_runs"] = ";".join(serialize_value(run) for run in outcome.runs)
    else:
        cells[task.column] = serialize_value(runs[0])
    if task.reasoning_enabled:
        cells[task.column + "_reasoning"] = first_trace or ""
    cells[task.column + "_truncated"] = "1" if truncated_any else "0"
    return cells


def _process_image(
    client: InferenceClient, config: RunConfig, item: WorkItem
) -> dict[str, str]:
    cells: dict[str, str] = {}
    for task in item.tasks:
        cells.update(_run_task(client, config, item.image, task))
    return cells


def run_batch(
    config: RunConfig,
    *,
    client: InferenceClient | None = None,
    max_images: int | None = None,
    on_image: Callable[[int, int, str], None] | None = None,
) -> BatchResult:
    """Run (or resume) the benchmark described by ``config``.

    Resume is automatic when the output file exists.  At most
    ``config.parallel_images`` images are in flight; tasks within an image run
    sequentially, and only this thread writes to the CSV.  ``max_images``
    stops after that many images without the final sorted rewrite, leaving
    exactly the crash-interrupted state resume expects (used by tests).
    """
    if client is None:
        client = InferenceClient(config.backend)
    output = config.output_csv
    if not output.parent.is_dir():
        raise ConfigError(f"output directory {str(output.parent)!r} does not exist")

    if output.exists():
        table, work = resume_plan(output, config)
        log.info("resuming: %d image(s) still need work", len(work))
    else:
        table = ResultsTable(header=fresh_header(config.tasks))
        work = [
            WorkItem(image=image, tasks=tuple(config.tasks))
            for image in list_images(config.image_dir)
        ]

    stats = BatchStats(scheduled=len(work))
    if max_images is not None and len(work) > max_images:
        work = work[:max_images]
        stats.interrupted = True

    # Establish the (possibly upgraded) header before any appends.
    write_table(output, table)

    def finish_image(item: WorkItem, cells: dict[str, str], appender) -> None:
        row = table.row_for(item.image.file_name)
        if row is None:
            row = ResultsRow(image=item.image.file_name)
            table.rows.append(row)
        row.cells.update(cells)
        writer = csv.writer(appender, lineterminator="\n")
        writer.writerow(table.as_record(row))
        appender.flush()
        stats.processed += 1
        stats.na_cells += sum(1 for value in cells.values() if value == NA_CELL)
        stats.truncated_cells += sum(
            1
            for column, value in cells.items()
            if column.endswith("_truncated") and value == "1"
        )
        if on_image is not None:
            on_image(stats.processed, len(work), item.image.file_name)

    with output.open("a", newline="", encoding="utf-8") as appender:
        if config.parallel_images <= 1 or len(work) <= 1:
            for item in work:
                finish_image(item, _process_image(client, config, item), appender)
        else:
            with ThreadPoolExecutor(max_workers=config.parallel_images) as pool:
                futures = {
                    pool.submit(_process_image, client, config, item): item
                    for item in work
                }
                for future in as_completed(futures):
                    finish_image(futures[future], future.result(), appender)

    if not stats.interrupted:
        write_table(output, table)
    return BatchResult(table=table, stats=stats)
