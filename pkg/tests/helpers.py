"""Builders shared across the test modules."""

from __future__ import annotations

from pathlib import Path

from vlm_harness import (
    BackendSpec,
    GenerationParams,
    RunConfig,
    TaskSpec,
    TaskType,
)

# Synthetic image payloads embed their own file name so the mock backend can
# identify them after the base64 round trip.
def write_images(directory: Path, names: list[str]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name in names:
        (directory / name).write_bytes(f"synthetic-image:{name}:payload".encode())


# Five tasks shaped like the benchmark: three counts, a presence check and an
# ordinal rating.  Each task text mentions its own column name, which is what
# the mock backend keys on.
def five_tasks(*, runs: int = 3, reasoning: bool = False) -> tuple[TaskSpec, ...]:
    return (
        TaskSpec(
            column="vehicles",
            task_type=TaskType.NUMERIC,
            task="Count the motor vehicles parked along the street.",
            format="Answer with a single integer and nothing else.",
            consensus_enabled=True,
            n_runs=runs,
            reasoning_enabled=reasoning,
        ),
        TaskSpec(
            column="sidewalk",
            task_type=TaskType.BOOLEAN,
            task="Decide whether a sidewalk runs along the street frontage.",
            format="Answer with yes or no and nothing else.",
            consensus_enabled=True,
            n_runs=runs,
            reasoning_enabled=reasoning,
        ),
        TaskSpec(
            column="entrances",
            task_type=TaskType.NUMERIC,
            task="Count the pedestrian entrances that open onto the street.",
            format="Answer with a single integer and nothing else.",
            consensus_enabled=True,
            n_runs=runs,
            reasoning_enabled=reasoning,
        ),
        TaskSpec(
            column="length",
            task_type=TaskType.NUMERIC,
            task="Estimate the length of the street frontage in meters.",
            format="Answer with a single number and nothing else.",
            consensus_enabled=True,
            n_runs=runs,
            reasoning_enabled=reasoning,
        ),
        TaskSpec(
            column="vegetation",
            task_type=TaskType.NUMERIC,
            task="Rate the vegetation presence on a scale from 1 to 6.",
            format="Answer with a single integer between 1 and 6.",
            consensus_enabled=True,
            n_runs=runs,
            reasoning_enabled=reasoning,
        ),
    )


def make_config(
    tmp_path: Path,
    backend_url: str,
    tasks: tuple[TaskSpec, ...],
    *,
    image_dir: str = "images",
    output_csv: str = "results.csv",
    kind: str = "qwen-style",
    seed: int | None = 42,
    max_tokens: int = 50,
    parallel_images: int = 1,
    retries: int = 0,
    role: str = "",
) -> RunConfig:
    return RunConfig(
        image_dir=tmp_path / image_dir,
        output_csv=tmp_path / output_csv,
        backend=BackendSpec(url=backend_url, kind=kind, max_retries=retries),
        tasks=tasks,
        global_role=role,
        params=GenerationParams(seed=seed, max_tokens=max_tokens),
        parallel_images=parallel_images,
    )


def five_task_fixture_rows(image_names: list[str], *, runs: int = 3) -> list[tuple]:
    """Deterministic mock replies for ``five_tasks`` over the given images.

    The vehicles runs disagree on the last run so consensus agreement is
    exercised; every other task answers identically across runs.
    """
    rows: list[tuple] = []
    for i, name in enumerate(sorted(image_names)):
        values = [i % 4] * (runs - 1) + [(i + 1) % 4]
        for run, value in enumerate(values):
            rows.append((name, "vehicles", run, 5, 0, f"I count {value} vehicles."))
        rows.append((name, "sidewalk", "*", 3, 0, "Yes." if i % 2 == 0 else "No."))
        rows.append((name, "entrances", "*", 4, 0, f"There are {i % 3} entrances."))
        rows.append((name, "length", "*", 6, 0, f"Roughly {20 + 5 * i} meters."))
        rows.append((name, "vegetation", "*", 2, 0, str(1 + i % 6)))
    return rows


def fixture_text(rows: list[tuple]) -> str:
    """Rows of (image, column, run, tokens, echo, text) -> fixture file body."""
    return (
        "\n".join(
            f"{image} | {column} | {run} | {tokens} | {echo} | {text}"
            for image, column, run, tokens, echo, text in rows
        )
        + "\n"
    )
