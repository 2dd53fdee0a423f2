"""Self-consistency voting across repeated runs of one task.

No single run is privileged: the winner is the largest equivalence class of
parsed values, and the agreement ratio is computed over all runs including
failed (NA) ones, so adding a failed run can only lower agreement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .config import RUNS_MAX, RUNS_MIN, TaskType
from .parsing import ParsedValue


@dataclass(frozen=True)
class ConsensusOutcome:
    value: ParsedValue  # majority value, or plurality value when not reached
    reached: bool  # strict majority: agreement_ratio > 0.5
    agreement_ratio: float  # winner size / all runs, NAs included
    runs: tuple[ParsedValue, ...]  # every run in execution order


@dataclass
class _Class:
    first_index: int  # earliest run index of any member, for tie-breaking
    members: list


def _numeric_classes(valid: list[tuple[int, float]], tolerance_pct: float) -> list[_Class]:
    """Greedy clustering anchored at the smallest unassigned value.

    Sorted ascending, a class opens at the smallest unassigned value ``s`` and
    absorbs every value within ``tolerance_pct`` percent of ``|s|``.  With
    tolerance 0 this degenerates to exact equality, also at ``s = 0``.
    """
    ordered = sorted(valid, key=lambda pair: pair[1])
    classes: list[_Class] = []
    position = 0
    while position < len(ordered):
        seed_index, seed = ordered[position]
        bound = tolerance_pct / 100.0 * abs(seed)
        cls = _Class(first_index=seed_index, members=[seed])
        position += 1
        while position < len(ordered) and ordered[position][1] - seed <= bound:
            index, value = ordered[position]
            cls.members.append(value)
            cls.first_index = min(cls.first_index, index)
            position += 1
        classes.append(cls)
    return classes


def _exact_classes(valid: list[tuple[int, object]]) -> list[_Class]:
    classes: dict[object, _Class] = {}
    for index, value in valid:
        cls = classes.get(value)
        if cls is None:
            classes[value] = _Class(first_index=index, members=[value])
        else:
            cls.members.append(value)
    return list(classes.values())


def compute_consensus(
    values: Sequence[ParsedValue],
    task_type: TaskType,
    tolerance_pct: float = 0.0,
) -> ConsensusOutcome:
    """Vote over ``values`` (one per run, in execution order).

    Numeric runs compare within ``tolerance_pct``; every other type compares
    by exact equality and must be called with tolerance 0.  Ties between
    equally large classes go to the class whose member appeared first.  The
    numeric representative is the lower median of the winning class.
    """
    runs = tuple(values)
    if not RUNS_MIN <= len(runs) <= RUNS_MAX:
        raise ValueError(
            f"consensus needs between {RUNS_MIN} and {RUNS_MAX} runs (got {len(runs)})"
        )
    if tolerance_pct < 0:
        raise ValueError(f"tolerance_pct must be >= 0 (got {tolerance_pct})")
    if tolerance_pct and task_type is not TaskType.NUMERIC:
        raise ValueError("tolerance_pct only applies to numeric tasks")

    valid = [(index, run.value) for index, run in enumerate(runs) if not run.is_na]
    if not valid:
        return ConsensusOutcome(ParsedValue(None), False, 0.0, runs)

    if task_type is TaskType.NUMERIC:
        classes = _numeric_classes(valid, tolerance_pct)
    else:
        classes = _exact_classes(valid)

    winner = max(classes, key=lambda cls: (len(cls.members), -cls.first_index))
    ratio = len(winner.members) / len(runs)
    if task_type is TaskType.NUMERIC:
        ordered = sorted(winner.members)
        representative = ordered[(len(ordered) - 1) // 2]  # lower median
    else:
        representative = winner.members[0]
    return ConsensusOutcome(ParsedValue(representative), ratio > 0.5, ratio, runs)
