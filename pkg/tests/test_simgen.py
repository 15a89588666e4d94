import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad as scipy_quad

from condense.errors import DomainError
from condense.metrics import FunctionCdf, crps_single
from condense.simgen import (CASE_IDS, CaseSpec, TruthOracle, generate,
                             train_test_split, truth_crps)

EXPECTED_DIMS = {"case1": 2, "case2": 2, "case3": 2, "case4": 3, "case5": 3,
                 "case6": 3, "case1_6d": 6, "case2_6d": 6, "case3_6d": 6,
                 "banana": 1, "cond_beta": 1}


def three_sigma_mean_check(draws, expected):
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - expected) <= 3 * se + 1e-12


def test_unknown_case_rejected():
    with pytest.raises(DomainError):
        CaseSpec(case_id="case99", N=10)


@pytest.mark.parametrize("case_id", CASE_IDS)
def test_shapes_and_determinism(case_id):
    spec = CaseSpec(case_id=case_id, N=500, seed=7)
    a, _ = generate(spec)
    b, _ = generate(spec)
    assert a.X.shape == (500, EXPECTED_DIMS[case_id])
    assert a.y.shape == (500,)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)


def test_case1_conditional_mean():
    # Beta(2, 5) mean is 2/7 at shape parameters (2, 5)
    _, oracle = generate(CaseSpec("case1", N=1, seed=0))
    rng = np.random.default_rng(0)
    draws = rng.beta(2.0, 5.0, size=100_000)
    three_sigma_mean_check(draws, 2.0 / 7.0)
    quad_mean = scipy_quad(lambda t: t * oracle.cond_density([2.0, 5.0], t), 0, 1)[0]
    assert quad_mean == pytest.approx(2.0 / 7.0, abs=1e-6)


def test_case2_conditional_mean():
    _, oracle = generate(CaseSpec("case2", N=1, seed=0))
    rng = np.random.default_rng(1)
    draws = rng.exponential(scale=0.2, size=100_000)  # rate 5 at x = (3, 4)
    three_sigma_mean_check(draws, 0.2)
    assert oracle.cond_cdf([3.0, 4.0], 0.2) == pytest.approx(stats.expon.cdf(0.2, scale=0.2))


def test_case3_conditional_mean_mixture():
    # mixture mean: (1 - x1) x1 + x1 x2
    x1, x2 = 0.3, 0.8
    _, oracle = generate(CaseSpec("case3", N=1, seed=0))
    rng = np.random.default_rng(2)
    comp = rng.uniform(size=100_000) < x1
    loc = np.where(comp, x2, x1)
    draws = rng.normal(loc=loc, scale=np.abs(loc))
    expected = (1 - x1) * x1 + x1 * x2
    three_sigma_mean_check(draws, expected)
    lo, hi = -6.0, 6.0
    quad_mean = scipy_quad(lambda t: t * oracle.cond_density([x1, x2], t), lo, hi)[0]
    assert quad_mean == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("case_id", ["case1", "case2", "case3", "case4", "case5",
                                     "case6", "banana", "cond_beta"])
def test_oracle_cdf_matches_density_integral(case_id):
    data, oracle = generate(CaseSpec(case_id, N=400, seed=11))
    rng = np.random.default_rng(12)
    rows = rng.choice(data.n_rows, size=12, replace=False)
    for r in rows:
        x = data.X[r]
        # integrate the density between two interior response quantiles drawn
        # from the observed sample, anchored at the oracle's own CDF
        ys = np.quantile(data.y, [0.25, 0.75])
        if ys[0] == ys[1]:
            continue
        integral = scipy_quad(lambda t: oracle.cond_density(x, t), ys[0], ys[1],
                              limit=200)[0]
        expected = oracle.cond_cdf(x, ys[1]) - oracle.cond_cdf(x, ys[0])
        assert integral == pytest.approx(expected, abs=1e-6)


def test_split_is_95_5_and_deterministic():
    data, _ = generate(CaseSpec("case1", N=2000, seed=5))
    train, test = train_test_split(data, seed=5)
    assert test.n_rows == 100
    assert train.n_rows == 1900
    train2, test2 = train_test_split(data, seed=5)
    np.testing.assert_array_equal(test.y, test2.y)
    merged = np.sort(np.concatenate([train.y, test.y]))
    np.testing.assert_array_equal(merged, np.sort(data.y))


def test_truth_crps_degenerate_point_mass():
    oracle = TruthOracle(
        cond_cdf=lambda x, y: (np.asarray(y) >= float(np.atleast_1d(x)[0])).astype(float),
        cond_density=lambda x, y: np.zeros_like(np.asarray(y, dtype=float)),
        bounded_01=True)
    X = np.array([[0.4], [0.6]])
    y = np.array([0.4, 0.6])
    # grid-based integration resolves the step only to the grid spacing
    assert truth_crps(oracle, X, y, grid_size=4096) == pytest.approx(0.0, abs=5e-3)


def test_truth_crps_uniform_is_one_sixth():
    oracle = TruthOracle(
        cond_cdf=lambda x, y: np.clip(np.asarray(y, dtype=float), 0.0, 1.0),
        cond_density=lambda x, y: np.ones_like(np.asarray(y, dtype=float)),
        bounded_01=True)
    rng = np.random.default_rng(6)
    y = rng.uniform(size=3000)
    X = rng.uniform(size=(3000, 1))
    got = truth_crps(oracle, X, y, domain=(0.0, 1.0))
    per_obs = np.array([crps_single(FunctionCdf(fn=lambda z: np.clip(z, 0, 1),
                                                domain=(0.0, 1.0)), v) for v in y[:500]])
    se = per_obs.std(ddof=1) / np.sqrt(y.size)
    assert abs(got - 1.0 / 6.0) <= 3 * se + 1e-3


def test_case6_weights_marginalize_to_mean():
    _, oracle = generate(CaseSpec("case6", N=1, seed=0))
    x = np.array([0.2, 0.3, 0.5])
    w = x / x.sum()
    y = 0.4
    expected = sum(w[q] * stats.norm.pdf(y, loc=x[q], scale=x[q]) for q in range(3))
    assert oracle.cond_density(x, y) == pytest.approx(expected, rel=1e-12)


def test_banana_truncation_and_truth():
    data, oracle = generate(CaseSpec("banana", N=5000, seed=9))
    assert np.all(np.abs(data.X) <= 3.0)
    x = np.array([1.5])
    assert oracle.cond_cdf(x, 1.25) == pytest.approx(0.5)  # mean is x^2 - 1


def test_cond_beta_matches_stated_family():
    data, oracle = generate(CaseSpec("cond_beta", N=2000, seed=10))
    assert np.all((data.y >= 0) & (data.y <= 1))
    x = np.array([0.6])
    assert oracle.cond_density(x, 0.05) == pytest.approx(
        stats.beta.pdf(0.05, 0.6, 0.6 ** 2 + 10.0))
