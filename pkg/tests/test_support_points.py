import numpy as np
import pytest

from condense.errors import DomainError
from condense.metrics import energy_distance_empirical
from condense.support_points import (SpConfig, empirical_energy_objective,
                                     sp_fixed_point_step, support_points_1d,
                                     support_points_nd)


def quantile_levels(n):
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def exact_uniform_sample(m=100_000):
    # data whose empirical CDF is the uniform CDF to within 1/(2m)
    return (2.0 * np.arange(1, m + 1) - 1.0) / (2.0 * m)


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def test_objective_candidate_equals_data():
    # 2*mean pairwise - mean pairwise = mean pairwise distance of the data
    assert empirical_energy_objective([0.0, 1.0], [0.0, 1.0]) == pytest.approx(0.5)


def test_objective_hand_computed():
    assert empirical_energy_objective([0.5], [0.0, 1.0]) == pytest.approx(1.0)


def test_objective_is_energy_distance_plus_data_constant():
    # the optimized form drops the data self-distance term, which is constant
    # in the candidate; the two agree up to exactly that term
    rng = np.random.default_rng(0)
    z = rng.normal(size=(6, 2))
    y = rng.normal(size=(11, 2))
    self_term = np.mean([np.linalg.norm(a - b) for a in y for b in y])
    assert empirical_energy_objective(z, y) == pytest.approx(
        energy_distance_empirical(z, y) + self_term, rel=1e-12)


def test_objective_dimension_mismatch():
    with pytest.raises(DomainError):
        empirical_energy_objective([[0.0, 1.0]], [[0.0]])


# ---------------------------------------------------------------------------
# 1D solver
# ---------------------------------------------------------------------------

def test_1d_uniform_single_point_is_median():
    res = support_points_1d(exact_uniform_sample(), 1)
    assert res.points[0] == pytest.approx(0.5, abs=1e-3)


def test_1d_uniform_two_points():
    res = support_points_1d(exact_uniform_sample(), 2)
    np.testing.assert_allclose(res.points, [0.25, 0.75], atol=1e-2)


def test_1d_degenerate_data():
    res = support_points_1d([3.0, 3.0, 3.0], 4)
    np.testing.assert_array_equal(res.points, np.full(4, 3.0))
    assert res.objective == 0.0


def test_1d_sorted_output_and_size():
    rng = np.random.default_rng(1)
    res = support_points_1d(rng.normal(size=400), 9)
    assert res.points.size == 9
    assert np.all(np.diff(res.points) >= 0)


def test_1d_objective_not_worse_than_quantile_init():
    rng = np.random.default_rng(2)
    for _ in range(5):
        data = rng.normal(size=200)
        n = int(rng.integers(2, 15))
        srt = np.sort(data)
        idx = np.maximum(np.ceil(quantile_levels(n) * data.size).astype(int) - 1, 0)
        init_obj = empirical_energy_objective(srt[idx], data)
        res = support_points_1d(data, n)
        assert res.objective <= init_obj + 1e-12


def grid_minimize_pair(data, lo, hi, coarse=441, fine=161):
    """Exhaustive 2-stage grid minimization of the two-point energy objective."""
    def sweep(g1, g2):
        best, best_obj = None, np.inf
        for z1 in g1:
            objs = [empirical_energy_objective([z1, z2], data) for z2 in g2]
            j = int(np.argmin(objs))
            if objs[j] < best_obj:
                best_obj, best = objs[j], (z1, g2[j])
        return best, best_obj

    g = np.linspace(lo, hi, coarse)
    (a, b), _ = sweep(g, g)
    h = (hi - lo) / (coarse - 1)
    (a, b), obj = sweep(np.linspace(a - h, a + h, fine), np.linspace(b - h, b + h, fine))
    return np.array(sorted((a, b))), obj


def test_1d_matches_exhaustive_grid_on_five_points():
    data = np.array([0.0, 0.3, 0.45, 0.8, 1.0])
    best, best_obj = grid_minimize_pair(data, -0.05, 1.05)
    res = support_points_1d(data, 2)
    np.testing.assert_allclose(res.points, best, atol=1e-3)
    assert res.objective <= best_obj + 1e-6


def test_1d_quantile_stationarity():
    rng = np.random.default_rng(3)
    data = rng.normal(size=5000)
    n = 10
    res = support_points_1d(data, n)
    ecdf = np.searchsorted(np.sort(data), res.points, side="right") / data.size
    assert np.all(np.abs(ecdf - quantile_levels(n)) <= 2.0 / n)


def test_1d_determinism_and_permutation_invariance():
    rng = np.random.default_rng(4)
    data = rng.normal(size=300)
    a = support_points_1d(data, 7, SpConfig(seed=5))
    b = support_points_1d(data, 7, SpConfig(seed=5))
    c = support_points_1d(data[rng.permutation(300)], 7, SpConfig(seed=5))
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.points, c.points)


def test_1d_overcompaction_warning():
    res = support_points_1d([0.0, 1.0], 30)
    assert res.points.size == 30
    assert any("10x" in w for w in res.warnings)


def test_1d_errors():
    with pytest.raises(DomainError):
        support_points_1d([], 1)
    with pytest.raises(DomainError):
        support_points_1d([0.0, np.inf], 1)
    with pytest.raises(DomainError):
        support_points_1d([0.0], 0)


# ---------------------------------------------------------------------------
# fixed-point step
# ---------------------------------------------------------------------------

def test_step_degenerate_optimum_unchanged():
    data = np.full((5, 1), 2.0)
    z = np.full((3, 1), 2.0)
    out = sp_fixed_point_step(z, data, eps=1e-10)
    np.testing.assert_allclose(out, z, atol=1e-9)


def test_step_single_point_is_weighted_mean():
    rng = np.random.default_rng(5)
    data = rng.normal(size=(40, 2))
    z = rng.normal(size=(1, 2))
    eps = 1e-10
    d = np.maximum(np.linalg.norm(data - z, axis=1), eps)
    expected = (data / d[:, None]).sum(axis=0) / (1.0 / d).sum()
    out = sp_fixed_point_step(z, data, eps)
    np.testing.assert_allclose(out[0], expected, rtol=1e-12)


def test_step_monotone_descent():
    rng = np.random.default_rng(6)
    for trial in range(5):
        data = rng.normal(size=(300, 2))
        z = rng.normal(size=(12, 2)) * 1.5
        eps = 1e-10 * float(data.max() - data.min())
        prev = empirical_energy_objective(z, data)
        for _ in range(25):
            z = sp_fixed_point_step(z, data, eps)
            cur = empirical_energy_objective(z, data)
            assert cur <= prev + 1e-10
            prev = cur


# ---------------------------------------------------------------------------
# nD solver
# ---------------------------------------------------------------------------

def test_nd_repeated_data():
    data = np.tile([1.0, -2.0, 0.5], (8, 1))
    res = support_points_nd(data, 3)
    np.testing.assert_array_equal(res.points, np.tile([1.0, -2.0, 0.5], (3, 1)))


def test_nd_symmetric_data_single_point_at_center():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(2000, 2))
    X = np.vstack([X, -X])
    res = support_points_nd(X, 1, SpConfig(seed=8, init="random_subsample"))
    np.testing.assert_allclose(res.points[0], [0.0, 0.0], atol=1e-2)


def test_nd_beats_random_subsamples():
    rng = np.random.default_rng(9)
    data = rng.normal(size=(10_000, 2))
    res = support_points_nd(data, 50, SpConfig(seed=10, init="random_subsample",
                                               tol=1e-7, max_iters=300))
    best_sub = min(
        empirical_energy_objective(data[rng.choice(10_000, 50, replace=False)], data)
        for _ in range(20))
    assert res.objective < best_sub


def test_nd_determinism_and_permutation_invariance():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(400, 3))
    cfg = SpConfig(seed=12, init="random_subsample", max_iters=60)
    a = support_points_nd(X, 8, cfg)
    b = support_points_nd(X, 8, cfg)
    c = support_points_nd(X[rng.permutation(400)], 8, cfg)
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.points, c.points)


def test_nd_objective_monotone_within_solver():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(500, 2))
    res = support_points_nd(X, 20, SpConfig(seed=14, init="random_subsample",
                                            max_iters=40))
    assert np.isfinite(res.objective)
    assert res.points.shape == (20, 2)


def test_nd_errors():
    with pytest.raises(DomainError):
        support_points_nd(np.array([[0.0, 1.0]]), 1)  # N < 2
    with pytest.raises(DomainError):
        support_points_nd(np.array([[0.0], [np.nan]]), 1)
