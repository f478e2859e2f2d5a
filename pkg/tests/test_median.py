import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpsd import median as med
from dpsd.median import MedianMechanism, ValueSet
from dpsd.noise import RandomSource


def brute_smooth_sensitivity(values, lo, hi, xi):
    """Direct double loop over the definition, with x_i = lo (i < 1) and hi (i > n)."""
    n = len(values)
    m = (n + 1) // 2

    def x(i):
        if i < 1:
            return lo
        if i > n:
            return hi
        return values[i - 1]

    best = 0.0
    for k in range(n + 1):
        local = max(x(m + t) - x(m + t - k - 1) for t in range(k + 2))
        best = max(best, math.exp(-k * xi) * local)
    return best


def test_value_set_basics():
    c = ValueSet(np.array([1.0, 2.0, 3.0, 4.0]), 0.0, 5.0)
    assert c.median_index == 2
    assert c.median == 2.0
    assert med.rank(c, 2.0) == 2
    assert med.rank(c, 1.5) == 1
    with pytest.raises(ValueError):
        ValueSet(np.array([2.0, 1.0]), 0, 5)
    with pytest.raises(ValueError):
        ValueSet(np.array([6.0]), 0, 5)
    with pytest.raises(ValueError):
        ValueSet(np.array([]), 1, 1)


def test_normalized_rank_error():
    c = ValueSet(np.arange(1.0, 101.0), 0, 101)
    assert med.normalized_rank_error(c, 50.0) == 0.0
    assert med.normalized_rank_error(c, 75.0) == 0.5
    assert med.normalized_rank_error(c, -5.0) == 1.0


def test_smooth_sensitivity_single_value_by_hand():
    # k=0 gives 0.5; k=1 gives e^{-xi} * (hi - lo)
    c = ValueSet(np.array([0.5]), 0.0, 1.0)
    assert med.smooth_sensitivity(c, 0.1) == pytest.approx(math.exp(-0.1), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 20), min_size=0, max_size=25),
    st.floats(0.001, 3.0),
)
def test_smooth_sensitivity_matches_definition(ints, xi):
    vals = np.sort(np.array(ints, dtype=float))
    c = ValueSet(vals, 0.0, 20.0)
    assert med.smooth_sensitivity(c, xi) == pytest.approx(brute_smooth_sensitivity(list(vals), 0.0, 20.0, xi), rel=1e-12)


def test_smooth_xi():
    assert med.smooth_xi(1.0, 1e-4) == pytest.approx(1 / (4 * (1 + math.log(2e4))))


def test_em_probabilities_by_hand():
    # lengths all 1, m = 2, distances 2,1,0,1 -> weights e^-2, e^-1, 1, e^-1 at eps=2
    c = ValueSet(np.array([1.0, 2.0, 3.0]), 0.0, 4.0)
    w = np.array([math.exp(-2), math.exp(-1), 1.0, math.exp(-1)])
    assert med.em_interval_probabilities(c, 2.0) == pytest.approx(w / w.sum(), rel=1e-12)


def test_em_empirical_matches_probabilities():
    c = ValueSet(np.array([1.0, 2.0, 3.0]), 0.0, 4.0)
    src = RandomSource(21)
    out = np.array([med.em_median(src, c, 2.0) for _ in range(20000)])
    freq = np.bincount(np.floor(out).astype(int), minlength=4) / len(out)
    assert freq == pytest.approx(med.em_interval_probabilities(c, 2.0), abs=0.012)


def test_em_limits():
    c = ValueSet(np.array([1.0, 2.0, 3.0]), 0.0, 4.0)
    assert 2.0 <= med.em_median(RandomSource(0), c, math.inf) < 3.0
    assert med.em_median(RandomSource(0, noiseless=True), c, 0.1) == 2.0
    empty = ValueSet(np.array([]), 0.0, 4.0)
    assert 0.0 <= med.em_median(RandomSource(0), empty, 1.0) <= 4.0


def test_ss_median_validation_and_clamp():
    c = ValueSet(np.array([1.0, 2.0, 3.0]), 0.0, 4.0)
    with pytest.raises(ValueError):
        med.ss_median(RandomSource(0), c, 1.5)
    with pytest.raises(ValueError):
        med.ss_median(RandomSource(0), c, 0.5, delta=0.0)
    outs = [med.ss_median(RandomSource(s), c, 0.01) for s in range(50)]
    assert all(0.0 <= o <= 4.0 for o in outs)


def test_ss_central_mass_on_unskewed_data():
    # uniform data obeys the 80/20 rule; n * xi must reach 4.03 for the lower bound to apply
    eps, delta, n = 0.5, 1e-4, 1000
    assert n * med.smooth_xi(eps, delta) >= 4.03
    c = ValueSet(np.sort(RandomSource(8).uniform(0.0, 1000.0, n)), 0.0, 1000.0)
    lo, hi = c.values[n // 5 - 1], c.values[4 * n // 5 - 1]
    trials = 4000
    src = RandomSource(80)
    freq = np.mean([lo <= med.ss_median(src.child(t), c, eps, delta) <= hi for t in range(trials)])
    floor = 0.5 * (1 - math.exp(-eps / 4))
    assert freq >= floor - 3 * math.sqrt(floor * (1 - floor) / trials)


def test_cell_median_interpolates():
    assert med.cell_median([1, 1, 1, 1], [0, 1, 2, 3, 4]) == 2.0
    assert med.cell_median([0, 4, 0], [0, 1, 2, 3]) == 1.5
    assert med.cell_median([-1, -1], [0, 1, 2]) == 1.0  # non-positive total -> midpoint
    with pytest.raises(ValueError):
        med.cell_median([1, 2], [0, 1])


def test_grid_overlap_weights():
    i0, i1, w, b = med.grid_overlap(np.array([0, 1, 2, 3, 4.0]), 0.5, 2.5)
    assert (i0, i1) == (0, 3)
    assert w.tolist() == [0.5, 1.0, 0.5]
    assert b.tolist() == [0.5, 1.0, 2.0, 2.5]


def test_noisy_mean_noiseless_is_mean():
    c = ValueSet(np.array([1.0, 2.0, 6.0]), 0.0, 10.0)
    assert med.nm_median(RandomSource(0, noiseless=True), c, 1.0) == pytest.approx(3.0)


def test_sampling_cost_formula():
    # 2 p e^{eps}: 2 * 0.01 * e^{0.9}
    assert med.sampled_cost(0.01, 0.9) == pytest.approx(0.049192062223139, rel=1e-12)
    assert med.sampled_cost(1.0, 0.3) == 0.3
    assert med.sampled_cost(0.5, 0.0) == 1.0
    assert med.sampled_cost(0.01, med.inner_epsilon(0.01, 0.1)) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        med.inner_epsilon(0.1, 0.1)


def test_mechanism_config():
    with pytest.raises(ValueError):
        MedianMechanism("bogus")
    with pytest.raises(ValueError):
        MedianMechanism("nm", sample_rate=0.5)
    assert MedianMechanism("ss").approximate
    assert not MedianMechanism("em").approximate
    with pytest.raises(ValueError):
        MedianMechanism("cell").select(RandomSource(0), ValueSet(np.array([1.0]), 0, 2), 1.0)


def test_sampled_em_stays_in_range():
    vals = np.sort(np.random.default_rng(0).random(50_000))
    c = ValueSet(vals, 0.0, 1.0)
    m = MedianMechanism("em", sample_rate=0.01)
    out = m.select(RandomSource(4), c, 0.1)
    assert 0.0 <= out <= 1.0
    assert med.normalized_rank_error(c, out) < 0.5
