"""Quantile thresholds on symbol probabilities and positive-symbol counting.

For each symbol the threshold is the alpha-order empirical quantile of the
training probabilities, taken as the lower order statistic at rank
ceil(alpha * n) (1-based). A symbol is positive when its probability is
greater than or equal to the threshold; a child's score is the proportion
of positive symbols among the symbols the child actually wrote.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CountingParams:
    alpha: float
    thresholds: dict[str, float]


def quantile_threshold(values: np.ndarray, alpha: float) -> float:
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = values.size
    if n == 0:
        raise ValueError("cannot take a quantile of no values")
    rank = int(np.ceil(alpha * n))
    rank = min(max(rank, 1), n)
    return float(values[rank - 1])


def counting_threshold(train_probs: dict[str, np.ndarray], alpha: float) -> CountingParams:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    thresholds = {s: quantile_threshold(p, alpha) for s, p in train_probs.items()}
    return CountingParams(alpha=alpha, thresholds=thresholds)


def positive_symbols(params: CountingParams, probs: dict[str, float]) -> int:
    return sum(1 for s, p in probs.items() if p >= params.thresholds[s])


def child_score(params: CountingParams, probs: dict[str, float]) -> float:
    """Proportion of positive symbols among the written ones."""
    if not probs:
        raise ValueError("child wrote no usable symbols")
    return positive_symbols(params, probs) / len(probs)
