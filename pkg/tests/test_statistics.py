import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from src.scheduling_interface import StatisticsError
from src.simulation.statistics import mann_whitney_u


def test_identical_samples_are_not_different():
    result = mann_whitney_u([1, 2, 3], [1, 2, 3])
    assert result.U == 4.5
    assert result.p >= 0.9


def test_separated_samples():
    result = mann_whitney_u([1, 2, 3, 4, 5], [6, 7, 8, 9, 10])
    assert result.U == 0
    assert result.p < 0.05


def test_swapping_samples_mirrors_u():
    a, b = [3, 8, 2, 9, 4], [7, 5, 10, 11]
    forward, backward = mann_whitney_u(a, b), mann_whitney_u(b, a)
    assert backward.U == len(a) * len(b) - forward.U
    assert backward.p == pytest.approx(forward.p)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_scipy_asymptotic(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(100, 130, size=8)
    b = rng.integers(105, 140, size=6)
    expected = mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    result = mann_whitney_u(a, b)
    assert result.U == pytest.approx(expected.statistic)
    assert result.p == pytest.approx(expected.pvalue)


def test_all_values_tied():
    assert mann_whitney_u([5, 5, 5], [5, 5, 5]).p == 1.0


def test_rejects_small_samples():
    with pytest.raises(StatisticsError):
        mann_whitney_u([1, 2], [3, 4, 5])


def test_rejects_non_finite_values():
    with pytest.raises(StatisticsError):
        mann_whitney_u([1, 2, float("nan")], [3, 4, 5])
