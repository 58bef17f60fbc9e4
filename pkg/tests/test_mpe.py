import numpy as np
import pytest

from mixprop.config import SearchConfig
from mixprop.errors import NonIdentifiableError, VanishingDerivativeError
from mixprop.kernels import KernelSpec, gram
from mixprop.mixture import ClassPriors, FeatureRoles, TwoSampleData, gen_gaussian, signed_weights
from mixprop.mpe import (
    AlphaEstimate,
    MciMoment,
    MomentFunctions,
    asymptotic_variance,
    ci_gtilde,
    ci_moment_coeffs,
    estimate_alpha,
    estimate_alpha_ci,
    estimate_alpha_mci,
    estimate_class_priors,
    priors_from_estimates,
)

CI = FeatureRoles((0,), (1,))
MCI = FeatureRoles((0,), (1,), (2,))


def _signed_covariance(data, alpha):
    w = signed_weights(data.n, data.nprime, alpha).weights
    x1, x2 = data.pooled((0,))[:, 0], data.pooled((1,))[:, 0]
    return w @ (x1 * x2) - (w @ x1) * (w @ x2)


@pytest.mark.parametrize("alpha", [-3.0, 0.0, 0.5, 1.0, 2.7])
def test_ci_quadratic_matches_direct_evaluation(small_data, alpha):
    quad = ci_moment_coeffs(small_data, CI)
    assert quad(alpha) == pytest.approx(_signed_covariance(small_data, alpha), abs=1e-12)


@pytest.mark.parametrize("alpha", [-1.0, 0.3, 1.9])
def test_ci_derivative_is_block_mean_gap(small_data, alpha):
    quad = ci_moment_coeffs(small_data, CI)
    gu, gv = ci_gtilde(small_data, CI, alpha)
    assert quad.derivative(alpha) == pytest.approx(gu.mean() - gv.mean(), abs=1e-12)


def test_ci_estimate_recovers_both_coefficients(ci_null_data):
    plus = estimate_alpha_ci(ci_null_data, CI, search_range=(1.0, 50.0))
    minus = estimate_alpha_ci(ci_null_data, CI, search_range=(-50.0, 0.0))
    assert plus.alpha_hat == pytest.approx(4 / 3, abs=0.15)
    assert minus.alpha_hat == pytest.approx(-1 / 3, abs=0.15)
    assert plus.flags == [] and plus.asymp_variance > 0
    priors = priors_from_estimates(plus, minus).priors
    assert priors.theta == pytest.approx(0.8, abs=0.05)
    assert priors.theta_prime == pytest.approx(0.2, abs=0.05)


def test_ci_estimate_is_scale_and_shift_invariant(ci_null_data):
    base = estimate_alpha_ci(ci_null_data, CI, search_range=(1.0, 50.0))
    transform = np.array([3.0, -2.0]) * ci_null_data.rows_u + np.array([5.0, 1.0])
    transform_v = np.array([3.0, -2.0]) * ci_null_data.rows_uprime + np.array([5.0, 1.0])
    moved = TwoSampleData(transform, transform_v, ("x1", "x2"))
    assert estimate_alpha_ci(moved, CI, search_range=(1.0, 50.0)).alpha_hat == pytest.approx(
        base.alpha_hat, rel=1e-8)


def test_ci_estimate_ignores_row_order_within_blocks(ci_null_data, rng):
    base = estimate_alpha_ci(ci_null_data, CI, search_range=(1.0, 50.0))
    shuffled = TwoSampleData(ci_null_data.rows_u[rng.permutation(ci_null_data.n)],
                             ci_null_data.rows_uprime[rng.permutation(ci_null_data.nprime)],
                             ci_null_data.feature_names)
    again = estimate_alpha_ci(shuffled, CI, search_range=(1.0, 50.0))
    assert again.alpha_hat == pytest.approx(base.alpha_hat, rel=1e-10)
    assert again.asymp_variance == pytest.approx(base.asymp_variance, rel=1e-8)


def test_two_roots_in_range_are_flagged(ci_null_data):
    est = estimate_alpha_ci(ci_null_data, CI, search_range=(-50.0, 50.0))
    assert "ambiguous-roots" in est.flags
    assert len(est.roots) == 2


def test_g_alt_breaks_ties(ci_null_data):
    cubes = MomentFunctions(g1=lambda x: x**3, g2=lambda x: x**3)
    est = estimate_alpha_ci(ci_null_data, CI, search_range=(-50.0, 50.0), g_alt=cubes)
    assert "disambiguated-by-g-alt" in est.flags
    assert est.alpha_hat in est.roots


def test_grid_fallback_when_no_root_in_range(ci_null_data):
    est = estimate_alpha_ci(ci_null_data, CI, search_range=(10.0, 20.0))
    assert "grid-fallback" in est.flags
    assert est.alpha_hat == pytest.approx(10.0, abs=0.01)


def test_asymptotic_variance_needs_nonzero_derivative():
    with pytest.raises(VanishingDerivativeError):
        asymptotic_variance(np.ones(3), np.ones(3), 1.2, 0.0)


def test_asymptotic_variance_formula():
    gu, gv = np.array([1.0, 3.0]), np.array([0.0, 2.0, 4.0])
    # ν = 5/2, ν′ = 5/3; V_U = 1, V_U′ = 8/3
    expected = (2.5 * 4.0 * 1.0 + (5 / 3) * 1.0 * (8 / 3)) / 0.25 / 5
    assert asymptotic_variance(gu, gv, 2.0, 0.5) == pytest.approx(expected)


def test_priors_from_estimates_clamps_and_flags():
    plus = AlphaEstimate(alpha_hat=1.2, search_range=(1, 50), objective=0.0, method="ci")
    minus = AlphaEstimate(alpha_hat=0.1, search_range=(-50, 0), objective=0.0, method="ci")
    est = priors_from_estimates(plus, minus)
    assert est.clamped
    assert est.priors.theta_prime == 0.0
    assert est.priors.theta == pytest.approx(0.9 / 1.1)


def test_priors_from_equal_estimates_are_not_identifiable():
    est = AlphaEstimate(alpha_hat=1.0, search_range=(0, 2), objective=0.0, method="ci")
    with pytest.raises(NonIdentifiableError):
        priors_from_estimates(est, est)


def test_fixed_search_passes_value_through(small_data):
    est = estimate_alpha(small_data, CI, SearchConfig.fixed(1.0))
    assert est.alpha_hat == 1.0 and est.method == "fixed"


def test_mci_moment_matches_direct_solve(small_data):
    lam, spec, alpha = 0.05, KernelSpec(1.5), 1.3
    moment = MciMoment(small_data, MCI, lam, spec)
    w = signed_weights(small_data.n, small_data.nprime, alpha).weights
    KS = gram(small_data.pooled((2,)), spec)
    D = np.diag(w)
    targets = small_data.pooled((0, 1))
    coef = np.linalg.solve(D @ KS + lam * np.eye(small_data.M), D @ targets)
    resid = targets - KS @ coef
    assert moment(alpha) == pytest.approx(float(np.sum(w * resid[:, 0] * resid[:, 1])), abs=1e-10)


def test_mci_moment_needs_conditioning_columns(small_data):
    with pytest.raises(ValueError):
        MciMoment(small_data, CI, 0.1, KernelSpec(1.0))


def test_mci_estimate_reports_grid_profile(small_data):
    est = estimate_alpha_mci(small_data, MCI, (1.1, 1.5), lam=0.05, kS=KernelSpec(1.5), grid_points=9)
    assert len(est.grid_profile) == 9
    assert 1.1 <= est.alpha_hat <= 1.5
    assert est.objective <= min(v for _, v in est.grid_profile) + 1e-15


@pytest.mark.slow
def test_mci_priors_on_synthetic_data():
    data = gen_gaussian(1000, 1000, ClassPriors(0.8, 0.2), 0.0, True, seed=21)
    est = estimate_class_priors(data, MCI, MCI, SearchConfig.mci("plus"), SearchConfig.mci("minus"))
    assert est.priors.theta == pytest.approx(0.8, abs=0.1)
    assert est.priors.theta_prime == pytest.approx(0.2, abs=0.1)


@pytest.mark.slow
def test_ci_pu_error_is_small():
    errors = []
    for seed in range(5):
        data = gen_gaussian(2000, 2000, ClassPriors(1.0, 0.5), 0.0, False, seed=seed)
        est = estimate_class_priors(data, CI, CI, SearchConfig.fixed(1.0), SearchConfig.ci("minus"))
        errors.append(abs(est.priors.theta_prime - 0.5))
    assert np.mean(errors) < 0.05


def test_quadratic_leading_coefficient_is_minus_mean_gap_product(small_data):
    quad = ci_moment_coeffs(small_data, CI)
    gap1 = small_data.rows_u[:, 0].mean() - small_data.rows_uprime[:, 0].mean()
    gap2 = small_data.rows_u[:, 1].mean() - small_data.rows_uprime[:, 1].mean()
    assert quad.a == pytest.approx(-gap1 * gap2, abs=1e-12)
