# Rank statistics for comparing coverage samples between policies
import logging
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import norm, rankdata, tiecorrect

from src.scheduling_interface import StatisticsError

logger = logging.getLogger(__name__)

MIN_SAMPLE_SIZE = 3


class MannWhitneyResult(NamedTuple):
    U: float
    p: float


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> MannWhitneyResult:
    """
    Two-sided Mann-Whitney U test using the normal approximation with tie and
    continuity correction.

    Args:
        sample_a: First sample; U is reported for this sample.
        sample_b: Second sample.

    Returns:
        U = R_a - n_a(n_a + 1)/2 and the two-sided p-value.

    Raises:
        StatisticsError: If either sample has fewer than 3 values or holds non-finite values.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < MIN_SAMPLE_SIZE or b.size < MIN_SAMPLE_SIZE:
        raise StatisticsError(
            f"Mann-Whitney U needs at least {MIN_SAMPLE_SIZE} values per sample, got {a.size} and {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise StatisticsError("Mann-Whitney U samples must be finite.")

    n_a, n_b = a.size, b.size
    ranked = rankdata(np.concatenate((a, b)))
    u_a = float(ranked[:n_a].sum() - n_a * (n_a + 1) / 2.0)

    T = tiecorrect(ranked)
    if T == 0:
        # Every value tied
        return MannWhitneyResult(u_a, 1.0)
    sd = np.sqrt(T * n_a * n_b * (n_a + n_b + 1) / 12.0)
    mean = n_a * n_b / 2.0
    z = max(abs(u_a - mean) - 0.5, 0.0) / sd
    p = float(min(1.0, 2.0 * norm.sf(z)))
    return MannWhitneyResult(u_a, p)
