import numpy as np
import pytest
from scipy import stats

from mixprop.config import KernelConfig
from mixprop.kernels import KernelSpec, gram
from mixprop.kerneltest_known import (
    CiStatistic,
    MciStatistic,
    ProductGram,
    decide,
    gamma_fit,
    known_mean,
    phi_check_conditionals,
    product_gram_null_moments,
    run_test_known,
    sigma_terms,
)
from mixprop.mixture import ClassPriors, FeatureRoles, TwoSampleData, gen_gaussian, signed_weights

CI = FeatureRoles((0,), (1,))
MCI = FeatureRoles((0,), (1,), (2,))
REPORT_KEYS = {"statistic", "null_mean", "null_var", "gamma_shape", "gamma_scale", "p_value", "reject",
               "level", "mode", "alpha_used", "diagnostics"}


def _random_product_gram(rng, n, nprime):
    X = rng.normal(size=(n + nprime, 4))
    return ProductGram(X @ X.T, n, nprime)


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.8])
def test_ci_statistic_matches_expanded_weighted_hsic(small_data, alpha):
    k1, k2 = KernelSpec(1.0), KernelSpec(1.3)
    stat = CiStatistic(small_data, CI, k1, k2)
    K1 = gram(small_data.pooled((0,)), k1)
    K2 = gram(small_data.pooled((1,)), k2)
    w = signed_weights(small_data.n, small_data.nprime, alpha).weights
    a, b = K1 @ w, K2 @ w
    expected = w @ (K1 * K2) @ w - 2.0 * np.sum(w * a * b) + (w @ a) * (w @ b)
    assert stat.value(alpha) == pytest.approx(expected, abs=1e-12)
    scaled, _ = stat(alpha)
    assert scaled == pytest.approx(small_data.M * expected, abs=1e-10)


def test_screening_statistic_is_n_times_biased_hsic(rng):
    x = rng.normal(size=(15, 2))
    data = TwoSampleData(x, np.empty((0, 2)), ("a", "b"))
    stat, _ = CiStatistic(data, CI, KernelSpec(1.0), KernelSpec(1.0))(1.0)
    K1 = gram(x[:, :1], KernelSpec(1.0))
    K2 = gram(x[:, 1:], KernelSpec(1.0))
    H = np.eye(15) - np.full((15, 15), 1 / 15)
    assert stat == pytest.approx(np.trace(K1 @ H @ K2 @ H) / 15, rel=1e-10)


def test_phi_check_conditionals_against_index_loops(rng):
    n, nprime, alpha = 4, 3, 1.4
    pg = _random_product_gram(rng, n, nprime)
    a, b = alpha, 1.0 - alpha
    A, B, C = pg.uu, pg.uv, pg.vv

    def inner(i1, q1, i2, q2):
        return a * a * A[i1, i2] + a * b * B[i1, q2] + a * b * B[i2, q1] + b * b * C[q1, q2]

    c20 = np.array([[np.mean([inner(i1, q1, i2, q2) for q1 in range(nprime) for q2 in range(nprime)])
                     for i2 in range(n)] for i1 in range(n)])
    c02 = np.array([[np.mean([inner(i1, q1, i2, q2) for i1 in range(n) for i2 in range(n)])
                     for q2 in range(nprime)] for q1 in range(nprime)])
    c11 = np.array([[np.mean([inner(i1, q1, i2, q2) for i2 in range(n) for q1 in range(nprime)])
                     for q2 in range(nprime)] for i1 in range(n)])

    cond = phi_check_conditionals(pg, alpha)
    np.testing.assert_allclose(cond.inner20, c20, atol=1e-12)
    np.testing.assert_allclose(cond.inner02, c02, atol=1e-12)
    np.testing.assert_allclose(cond.inner11, c11, atol=1e-12)

    M = n + nprime
    nu, nu_p = M / n, M / nprime
    expected_var = (2 * nu**2 * np.mean(c20**2) + 2 * nu_p**2 * np.mean(c02**2)
                    + 4 * nu * nu_p * np.mean(c11**2))
    mean, var = product_gram_null_moments(pg, alpha)
    assert var == pytest.approx(expected_var, rel=1e-12)
    expected_mean = (nu * a * a * (np.mean(np.diag(A)) - A.mean())
                     + nu_p * b * b * (np.mean(np.diag(C)) - C.mean()))
    assert mean == pytest.approx(expected_mean, rel=1e-12)


def test_screening_moments_only_use_the_u_block(rng):
    pg = _random_product_gram(rng, 6, 0)
    s20, s02, s11 = sigma_terms(phi_check_conditionals(pg, 1.0))
    assert s02 == 0.0 and s11 == 0.0
    mean, var = product_gram_null_moments(pg, 1.0)
    assert var == pytest.approx(2.0 * np.mean(pg.uu**2))
    assert mean == pytest.approx(known_mean(pg, 1.0))


def test_null_moments_need_two_rows_per_block(rng):
    with pytest.raises(ValueError):
        product_gram_null_moments(_random_product_gram(rng, 4, 1), 1.2)


def test_gamma_fit_matches_moments():
    fit = gamma_fit(2.0, 8.0)
    assert fit.shape == pytest.approx(0.5) and fit.scale == pytest.approx(4.0)
    assert gamma_fit(-1.0, 2.0) is None
    assert gamma_fit(1.0, 0.0) is None


def test_gamma_fit_recovers_sampled_gamma(rng):
    sample = rng.gamma(2.5, 1.7, size=100_000)
    fit = gamma_fit(float(sample.mean()), float(sample.var()))
    assert fit.shape == pytest.approx(2.5, rel=0.05)
    assert fit.scale == pytest.approx(1.7, rel=0.05)


@pytest.mark.parametrize("kind", ["ci", "mci"])
def test_known_test_ignores_row_order_within_blocks(rng, kind):
    data = gen_gaussian(40, 30, ClassPriors(0.8, 0.2), 0.0, True, seed=3)
    shuffled = TwoSampleData(data.rows_u[rng.permutation(data.n)],
                             data.rows_uprime[rng.permutation(data.nprime)], data.feature_names)
    roles = CI if kind == "ci" else MCI
    base = run_test_known(data, roles, 4 / 3, kind)
    again = run_test_known(shuffled, roles, 4 / 3, kind)
    assert again.statistic == pytest.approx(base.statistic, rel=1e-9, abs=1e-12)
    assert again.null_mean == pytest.approx(base.null_mean, rel=1e-9, abs=1e-12)
    assert again.null_var == pytest.approx(base.null_var, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.4, 1.0, 1.6])
def test_ci_statistic_is_symmetric_in_the_two_features(small_data, alpha):
    k1, k2 = KernelSpec(1.0), KernelSpec(1.7)
    forward = CiStatistic(small_data, CI, k1, k2).value(alpha)
    # swapping the roles also swaps which kernel each block uses
    backward = CiStatistic(small_data, CI.swapped(), k2, k1).value(alpha)
    assert abs(forward - backward) <= 1e-10


def test_decide_degenerate_null_never_rejects():
    report = decide(5.0, 0.0, 1.0, 0.05, "CI-known", 1.0)
    assert report.p_value == 1.0 and not report.reject
    assert "gamma-degenerate" in report.diagnostics["flags"]


def test_decide_flags_negative_statistic():
    report = decide(-1e-6, 1.0, 1.0, 0.05, "CI-known", 1.0)
    assert "negative-statistic" in report.diagnostics["flags"]
    assert report.p_value == pytest.approx(1.0)


def test_known_test_report_shape():
    data = gen_gaussian(150, 150, ClassPriors(0.8, 0.2), 0.0, False, seed=2)
    report = run_test_known(data, CI, 4 / 3, "ci", 0.05, KernelConfig.ci_test())
    assert set(report.to_json()) == REPORT_KEYS
    assert report.mode == "CI-known"
    assert 0.0 <= report.p_value <= 1.0
    assert report.null_mean > 0 and report.null_var > 0


def test_known_test_rejects_strong_dependence():
    data = gen_gaussian(400, 400, ClassPriors(0.8, 0.2), 0.9, False, seed=3)
    report = run_test_known(data, CI, 4 / 3, "ci", 0.05)
    assert report.reject
    assert report.p_value < 0.01


def test_screening_mode_detects_dependence(rng):
    x1 = rng.normal(size=200)
    x2 = x1 + 0.3 * rng.normal(size=200)
    data = TwoSampleData(np.column_stack([x1, x2]), np.empty((0, 2)), ("a", "b"))
    report = run_test_known(data, CI, 1.0, "ci", 0.05)
    assert report.reject
    with pytest.raises(ValueError, match="degenerate mixture"):
        run_test_known(data, CI, 0.5, "ci", 0.05)


def test_mci_product_gram_is_positive_semidefinite(small_data):
    stat = MciStatistic(small_data, MCI, KernelSpec(1.0), KernelSpec(1.0), KernelSpec(1.5), lam=0.05, k_top=3)
    pg, w = stat.product_gram(1.2)
    np.testing.assert_allclose(pg.G, pg.G.T, atol=1e-12)
    assert np.linalg.eigvalsh(pg.G).min() > -1e-10
    assert stat.value(1.2) >= -1e-12


@pytest.mark.slow
def test_mci_known_rejects_strong_dependence():
    data = gen_gaussian(500, 500, ClassPriors(0.8, 0.2), 0.95, True, seed=4)
    report = run_test_known(data, MCI, 4 / 3, "mci", 0.05)
    assert report.mode == "MCI-known"
    assert report.reject


@pytest.mark.slow
def test_gamma_null_is_calibrated_under_independence():
    draws, cdfs = [], []
    for seed in range(300):
        data = gen_gaussian(300, 300, ClassPriors(0.8, 0.2), 0.0, False, seed=1000 + seed)
        report = run_test_known(data, CI, 4 / 3, "ci", 0.05)
        draws.append(report.statistic)
        cdfs.append((report.gamma.shape, report.gamma.scale))
    draws = np.sort(np.asarray(draws))
    avg_cdf = np.mean([stats.gamma.cdf(draws, k, scale=s) for k, s in cdfs], axis=0)
    empirical = np.arange(1, draws.size + 1) / draws.size
    assert np.max(np.abs(empirical - avg_cdf)) <= 0.1
