"""
One-sided rank tests used to compare Dice scores.

Both tests work on midranks (``scipy.stats.rankdata``). Doubling the midranks makes
every rank sum an integer, so the exact null distributions are counted with
integer dynamic programming / enumeration and come out exactly.
"""

import itertools
import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from ..errors import DataError, ShapeError

__all__ = [
    "WILCOXON_EXACT_MAX",
    "MANN_WHITNEY_EXACT_MAX",
    "wilcoxon_signed_rank_one_sided",
    "mann_whitney_one_sided",
    "p_value_or_none",
]

logger = logging.getLogger(__name__)

WILCOXON_EXACT_MAX = 20
MANN_WHITNEY_EXACT_MAX = 12
WILCOXON_MIN_PAIRS = 5


def _doubled_ranks(values: np.ndarray) -> np.ndarray:
    return np.rint(2.0 * stats.rankdata(values)).astype(np.int64)


def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def wilcoxon_signed_rank_one_sided(x: Sequence[float], y: Sequence[float]) -> float:
    """
    p-value of the alternative "x is greater than y" for paired samples.
    Zero differences are dropped first. Exact (all 2^n sign assignments) for
    n <= 20, normal approximation with continuity and tie correction above.
    O(n * sum of ranks) exact, O(n log n) approximate
    :raises ShapeError: if the samples have different lengths.
    :raises DataError: if all differences are zero or fewer than 5 remain.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"paired samples must be 1-D of equal length, got {x.shape} and {y.shape}")
    diff = x - y
    diff = diff[diff != 0]
    if diff.size == 0:
        raise DataError("all paired differences are zero")
    n = diff.size
    if n < WILCOXON_MIN_PAIRS:
        raise DataError(f"need at least {WILCOXON_MIN_PAIRS} non-zero differences, got {n}")
    magnitudes = np.abs(diff)
    if n <= WILCOXON_EXACT_MAX:
        ranks = _doubled_ranks(magnitudes)
        observed = int(ranks[diff > 0].sum())
        # counts[s]: number of sign assignments whose positive ranks sum to s
        counts = np.zeros(int(ranks.sum()) + 1, dtype=object)
        counts[0] = 1
        for r in ranks:
            counts[r:] = counts[r:] + counts[: counts.size - r].copy()
        tail = int(sum(counts[observed:]))
        return tail / 2 ** n
    ranks = stats.rankdata(magnitudes)
    w_plus = float(ranks[diff > 0].sum())
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(magnitudes) / 48.0
    if var <= 0:
        return 1.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return float(stats.norm.sf(z))


def mann_whitney_one_sided(a: Sequence[float], b: Sequence[float]) -> float:
    """
    p-value of the alternative "a is less than b" for independent samples, from the
    U statistic of ``a``. Exact (every split of the pooled ranks) when
    n_a + n_b <= 12, normal approximation with continuity and tie correction above.
    :raises DataError: if either sample is empty.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise DataError("both samples must be nonempty")
    n_a, n_b = a.size, b.size
    total = n_a + n_b
    pooled = np.concatenate([a, b])
    if total <= MANN_WHITNEY_EXACT_MAX:
        ranks = _doubled_ranks(pooled)
        observed = int(ranks[:n_a].sum())
        hits = 0
        splits = 0
        for chosen in itertools.combinations(range(total), n_a):
            splits += 1
            if int(ranks[list(chosen)].sum()) <= observed:
                hits += 1
        return hits / splits
    ranks = stats.rankdata(pooled)
    u_a = float(ranks[:n_a].sum()) - n_a * (n_a + 1) / 2.0
    mean = n_a * n_b / 2.0
    var = n_a * n_b / 12.0 * ((total + 1) - _tie_term(pooled) / (total * (total - 1)))
    if var <= 0:
        return 1.0
    z = (u_a + 0.5 - mean) / math.sqrt(var)
    return float(stats.norm.cdf(z))


def p_value_or_none(
    test: Callable[[Sequence[float], Sequence[float]], float],
    first: Sequence[float],
    second: Sequence[float],
    label: str = "",
) -> Optional[float]:
    """Run ``test``; a skipped statistic (too few pairs, no differences) is logged and gives None."""
    try:
        return test(first, second)
    except DataError as exc:
        logger.warning("skipping %s test%s: %s", test.__name__, f" for {label}" if label else "", exc)
        return None
