"""Evaluation metrics against human ground truth.

All inputs are aligned sequences with NA predictions already removed unless a
function documents otherwise.  Undefined statistics (correlation at zero
variance, sensitivity without positive truth...) return NaN, which reports
render as ``NA``; chance-corrected kappas return 0.0 on degenerate marginals
rather than dividing by zero.
"""

from __future__ import annotations

import math
from typing import Sequence


def proximity(truth: float, predicted: float, value_range: float) -> float:
    """Range-normalized closeness in [0, 1]: ``max(0, 1 - |err| / range)``.

    A perfect answer scores 1; anything off by the full observed range or
    more scores 0.  ``value_range`` must be positive.
    """
    if value_range <= 0:
        raise ValueError(f"value_range must be positive (got {value_range})")
    return max(0.0, 1.0 - abs(truth - predicted) / value_range)


def task_proximity(
    truth: Sequence[float],
    predicted: Sequence[float | None],
    value_range: float,
) -> float:
    """Mean proximity over evaluated pairs; ``None`` predictions are skipped.

    With values in {0,1} and range 1 this equals plain accuracy.
    """
    scores = [
        proximity(t, p, value_range)
        for t, p in zip(truth, predicted, strict=True)
        if p is not None
    ]
    if not scores:
        raise ValueError("no evaluated pairs")
    return _mean(scores)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _check_paired(truth: Sequence, predicted: Sequence) -> None:
    if len(truth) != len(predicted):
        raise ValueError(
            f"length mismatch: {len(truth)} truth vs {len(predicted)} predictions"
        )
    if not truth:
        raise ValueError("no evaluated pairs")


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation; NaN when either side has zero variance."""
    _check_paired(xs, ys)
    mx = _mean(xs)
    my = _mean(ys)
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx <= 0 or syy <= 0:
        return math.nan
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


def binary_metrics(truth: Sequence[int], predicted: Sequence[int]) -> dict[str, float]:
    """Accuracy, sensitivity, specificity and Cohen's kappa for 0/1 pairs."""
    _check_paired(truth, predicted)
    for value in list(truth) + list(predicted):
        if value not in (0, 1):
            raise ValueError(f"binary values must be 0 or 1 (got {value!r})")
    tp = sum(1 for t, p in zip(truth, predicted) if t == 1 and p == 1)
    tn = sum(1 for t, p in zip(truth, predicted) if t == 0 and p == 0)
    fp = sum(1 for t, p in zip(truth, predicted) if t == 0 and p == 1)
    fn = sum(1 for t, p in zip(truth, predicted) if t == 1 and p == 0)
    n = len(truth)
    observed = (tp + tn) / n
    expected = ((tp + fn) * (tp + fp) + (tn + fp) * (tn + fn)) / n**2
    if 1.0 - expected <= 0:
        kappa = 0.0  # single-class marginals: chance explains everything
    else:
        kappa = (observed - expected) / (1.0 - expected)
    return {
        "accuracy": observed,
        "sensitivity": tp / (tp + fn) if tp + fn else math.nan,
        "specificity": tn / (tn + fp) if tn + fp else math.nan,
        "cohen_kappa": kappa,
    }


def count_metrics(truth: Sequence[float], predicted: Sequence[float]) -> dict[str, float]:
    """Error metrics for counting tasks."""
    _check_paired(truth, predicted)
    errors = [p - t for t, p in zip(truth, predicted)]
    return {
        "mae": _mean([abs(e) for e in errors]),
        "bias": _mean(errors),
        "exact": _mean([1.0 if e == 0 else 0.0 for e in errors]),
        "within1": _mean([1.0 if abs(e) <= 1 else 0.0 for e in errors]),
        "within2": _mean([1.0 if abs(e) <= 2 else 0.0 for e in errors]),
        "pearson_r": pearson_r(truth, predicted),
    }


def continuous_metrics(
    truth: Sequence[float], predicted: Sequence[float]
) -> dict[str, float]:
    """Error metrics for continuous estimates (meters and the like).

    MAPE skips pairs with zero truth — a relative error against zero is
    undefined — and is NaN when nothing remains.
    """
    _check_paired(truth, predicted)
    errors = [p - t for t, p in zip(truth, predicted)]
    relative = [abs(p - t) / t for t, p in zip(truth, predicted) if t > 0]
    return {
        "mae": _mean([abs(e) for e in errors]),
        "bias": _mean(errors),
        "mape": _mean(relative) * 100.0 if relative else math.nan,
        "within10m": _mean([1.0 if abs(e) <= 10 else 0.0 for e in errors]),
        "pearson_r": pearson_r(truth, predicted),
    }


def ordinal_metrics(
    truth: Sequence[int], predicted: Sequence[int], num_classes: int
) -> dict[str, float]:
    """Class-distance metrics for ordinal labels in ``1..num_classes``.

    The weighted kappa uses linear agreement weights
    ``w[i][j] = 1 - |i - j| / (K - 1)`` with the chance matrix from marginal
    products; with K = 2 it coincides with plain Cohen's kappa.
    """
    _check_paired(truth, predicted)
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2 (got {num_classes})")
    for value in list(truth) + list(predicted):
        if not (isinstance(value, int) or float(value).is_integer()) or not (
            1 <= value <= num_classes
        ):
            raise ValueError(
                f"ordinal values must be integers in [1,{num_classes}] (got {value!r})"
            )
    n = len(truth)
    k = num_classes
    counts = [[0] * k for _ in range(k)]
    for t, p in zip(truth, predicted):
        counts[int(t) - 1][int(p) - 1] += 1
    row_marginals = [sum(counts[i][j] for j in range(k)) for i in range(k)]
    col_marginals = [sum(counts[i][j] for i in range(k)) for j in range(k)]
    observed = 0.0
    expected = 0.0
    for i in range(k):
        for j in range(k):
            weight = 1.0 - abs(i - j) / (k - 1)
            observed += weight * counts[i][j] / n
            expected += weight * row_marginals[i] * col_marginals[j] / n**2
    if 1.0 - expected <= 0:
        kappa_w = 0.0
    else:
        kappa_w = (observed - expected) / (1.0 - expected)
    errors = [abs(int(p) - int(t)) for t, p in zip(truth, predicted)]
    return {
        "exact": _mean([1.0 if e == 0 else 0.0 for e in errors]),
        "within1class": _mean([1.0 if e <= 1 else 0.0 for e in errors]),
        "mae_class": _mean([float(e) for e in errors]),
        "weighted_kappa_linear": kappa_w,
    }


def rank_models(
    reports: Sequence[tuple[str, dict[str, float]]],
) -> list[tuple[str, dict[str, float], float]]:
    """Rank models by the unweighted mean of their per-task proximities.

    Every report must cover the same task set.  Returns
    ``(name, per-task scores, mean)`` rows sorted by mean descending, ties
    broken by name.
    """
    if not reports:
        raise ValueError("no reports to rank")
    task_set = set(reports[0][1])
    for name, scores in reports:
        if set(scores) != task_set:
            raise ValueError(
                f"report {name!r} covers tasks {sorted(scores)}, "
                f"expected {sorted(task_set)}"
            )
    rows = [(name, dict(scores), _mean(list(scores.values()))) for name, scores in reports]
    rows.sort(key=lambda row: (-row[2], row[0]))
    return rows
