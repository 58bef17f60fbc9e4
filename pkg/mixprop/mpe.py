"""
MPE
===
Mixture proportion estimators.

* CI:  m̂(α) = Ê_{F̂α}[g₁·g₂] − Ê_{F̂α}[g₁]·Ê_{F̂α}[g₂] is an exact quadratic in α;
       its in-range root is α̂.
* MCI: m̂(α) = Σᵢ wᵢ(g₁ − μ̂₁^α)(g₂ − μ̂₂^α) with μ̂^α from weakly-supervised
       KRR on X_S; α̂ minimises m̂² by coarse grid + golden section.

``estimate_class_priors`` runs one search per coefficient and converts the
pair (α̂₊, α̂₋) into class priors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from mixprop.config import SearchConfig
from mixprop.errors import NonIdentifiableError, NumericalError, VanishingDerivativeError
from mixprop.kernels import KernelSpec, gram, ws_krr_fit
from mixprop.mixture import (
    AlphaPair,
    ClassPriors,
    FeatureRoles,
    TwoSampleData,
    signed_weights,
    thetas_from_alphas,
)
from mixprop.numerics import golden_section_min, solve_quadratic

logger = logging.getLogger(__name__)

CI_GRID_STEPS = 2000
D0_FLOOR = 1e-10


def _identity(block: np.ndarray) -> np.ndarray:
    return block


@dataclass(frozen=True)
class MomentFunctions:
    """g₁, g₂ map a feature block (m × p) to m × q; g₁₂ is their row-wise dot."""

    g1: Callable[[np.ndarray], np.ndarray] = _identity
    g2: Callable[[np.ndarray], np.ndarray] = _identity

    def evaluate(self, data: TwoSampleData, roles: FeatureRoles, which: str):
        G1 = np.asarray(self.g1(data.block(which, roles.idx1)), dtype=float)
        G2 = np.asarray(self.g2(data.block(which, roles.idx2)), dtype=float)
        G1 = G1.reshape(G1.shape[0], -1)
        G2 = G2.reshape(G2.shape[0], -1)
        if G1.shape != G2.shape:
            raise ValueError(f"g1 and g2 outputs differ in shape: {G1.shape} vs {G2.shape}")
        if not (np.all(np.isfinite(G1)) and np.all(np.isfinite(G2))):
            raise ValueError("moment functions produced non-finite values")
        return G1, G2


IDENTITY = MomentFunctions()


@dataclass(frozen=True)
class MomentQuadratic:
    a: float
    b: float
    c: float

    def __call__(self, alpha: float) -> float:
        return (self.a * alpha + self.b) * alpha + self.c

    def derivative(self, alpha: float) -> float:
        return 2.0 * self.a * alpha + self.b


@dataclass
class AlphaEstimate:
    alpha_hat: float
    search_range: tuple[float, float]
    objective: float
    method: str
    roots: tuple[float, ...] = ()
    asymp_variance: float | None = None
    d0_hat: float | None = None
    flags: list[str] = field(default_factory=list)
    grid_profile: list[tuple[float, float]] | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "alpha_hat": self.alpha_hat,
            "search_range": list(self.search_range),
            "objective": self.objective,
            "method": self.method,
            "roots": list(self.roots),
            "asymp_variance": self.asymp_variance,
            "d0_hat": self.d0_hat,
            "flags": list(self.flags),
            "grid_profile": self.grid_profile,
        }


# ── CI estimator ──────────────────────────────────────────────────────────
def ci_moment_coeffs(data: TwoSampleData, roles: FeatureRoles, g: MomentFunctions = IDENTITY) -> MomentQuadratic:
    if data.n < 1 or data.nprime < 1:
        raise ValueError("CI moment needs n, nprime ≥ 1")
    G1u, G2u = g.evaluate(data, roles, "u")
    G1v, G2v = g.evaluate(data, roles, "uprime")
    m1u, m2u = G1u.mean(axis=0), G2u.mean(axis=0)
    m1v, m2v = G1v.mean(axis=0), G2v.mean(axis=0)
    ju = float(np.mean(np.sum(G1u * G2u, axis=1)))
    jv = float(np.mean(np.sum(G1v * G2v, axis=1)))

    uv, vu = float(m1u @ m2v), float(m1v @ m2u)
    uu, vv = float(m1u @ m2u), float(m1v @ m2v)
    return MomentQuadratic(a=uv + vu - uu - vv, b=ju - jv + 2.0 * vv - uv - vu, c=jv - vv)


def ci_gtilde(data: TwoSampleData, roles: FeatureRoles, alpha: float, g: MomentFunctions = IDENTITY):
    """g̃ = (g₁ − Ê_{F̂α}[g₁])·(g₂ − Ê_{F̂α}[g₂]) on each block."""
    G1u, G2u = g.evaluate(data, roles, "u")
    G1v, G2v = g.evaluate(data, roles, "uprime")
    e1 = alpha * G1u.mean(axis=0) + (1.0 - alpha) * G1v.mean(axis=0)
    e2 = alpha * G2u.mean(axis=0) + (1.0 - alpha) * G2v.mean(axis=0)
    gu = np.sum((G1u - e1) * (G2u - e2), axis=1)
    gv = np.sum((G1v - e1) * (G2v - e2), axis=1)
    return gu, gv


def asymptotic_variance(
    gtilde_u: np.ndarray,
    gtilde_uprime: np.ndarray,
    alpha_hat: float,
    d0_hat: float,
) -> float:
    """Var(α̂) ≈ (ν α² V_U[g̃] + ν′ (1−α)² V_U′[g̃]) / d₀² / M."""
    if abs(d0_hat) < D0_FLOOR:
        raise VanishingDerivativeError("vanishing moment derivative")
    n, nprime = len(gtilde_u), len(gtilde_uprime)
    M = n + nprime
    nu, nu_p = M / n, M / nprime
    spread = nu * alpha_hat**2 * np.var(gtilde_u) + nu_p * (1.0 - alpha_hat) ** 2 * np.var(gtilde_uprime)
    return float(spread / d0_hat**2 / M)


def _attach_variance(est: AlphaEstimate, gu: np.ndarray, gv: np.ndarray, d0: float) -> None:
    est.d0_hat = d0
    try:
        est.asymp_variance = asymptotic_variance(gu, gv, est.alpha_hat, d0)
    except VanishingDerivativeError:
        est.flags.append("vanishing-derivative")


def estimate_alpha_ci(
    data: TwoSampleData,
    roles: FeatureRoles,
    g: MomentFunctions = IDENTITY,
    search_range: tuple[float, float] = (1.0, 50.0),
    g_alt: MomentFunctions | None = None,
    tol: float = 1e-8,
) -> AlphaEstimate:
    lo, hi = search_range
    if not lo < hi:
        raise ValueError(f"empty search range [{lo}, {hi}]")
    quad = ci_moment_coeffs(data, roles, g)
    flags: list[str] = []
    try:
        roots = solve_quadratic(quad.a, quad.b, quad.c)
    except NumericalError:
        roots = ()
        flags.append("zero-polynomial")
    inside = [r for r in roots if lo <= r <= hi]

    if len(inside) == 1:
        alpha_hat = inside[0]
    elif len(inside) == 2:
        if g_alt is not None:
            alt = ci_moment_coeffs(data, roles, g_alt)
            alpha_hat = min(inside, key=lambda r: alt(r) ** 2)
            flags.append("disambiguated-by-g-alt")
        else:
            alpha_hat = min(inside, key=lambda r: quad(r) ** 2)
            flags.append("ambiguous-roots")
            logger.warning("two CI roots %s inside [%g, %g]; picked %g", inside, lo, hi, alpha_hat)
    else:
        step = (hi - lo) / CI_GRID_STEPS
        grid = np.linspace(lo, hi, CI_GRID_STEPS + 1)
        j = int(np.argmin(np.array([quad(a) ** 2 for a in grid])))
        alpha_hat, _ = golden_section_min(lambda a: quad(a) ** 2,
                                          max(lo, grid[j] - step), min(hi, grid[j] + step), tol)
        if quad(grid[j]) ** 2 < quad(alpha_hat) ** 2:
            alpha_hat = float(grid[j])
        flags.append("grid-fallback")
        logger.warning("no CI root in [%g, %g]; grid fallback gives %g", lo, hi, alpha_hat)

    est = AlphaEstimate(alpha_hat=float(alpha_hat), search_range=(lo, hi),
                        objective=float(quad(alpha_hat) ** 2), method="ci",
                        roots=tuple(roots), flags=flags)
    gu, gv = ci_gtilde(data, roles, est.alpha_hat, g)
    _attach_variance(est, gu, gv, quad.derivative(est.alpha_hat))
    return est


# ── MCI estimator ─────────────────────────────────────────────────────────
class MciMoment:
    """m̂_MCI as a function of α, with the X_S Gram and g values cached."""

    def __init__(
        self,
        data: TwoSampleData,
        roles: FeatureRoles,
        lam: float,
        kS: KernelSpec,
        g: MomentFunctions = IDENTITY,
    ):
        if not roles.idxS:
            raise ValueError("MCI moment needs at least one X_S column")
        if data.nprime < 1:
            raise ValueError("MCI moment needs nprime ≥ 1")
        roles.check_width(data.d)
        self.n, self.nprime, self.lam = data.n, data.nprime, lam
        self.KS = gram(data.pooled(roles.idxS), kS)
        G1u, G2u = g.evaluate(data, roles, "u")
        G1v, G2v = g.evaluate(data, roles, "uprime")
        if G1u.shape[1] != 1:
            raise ValueError("MCI moment needs scalar-valued g1, g2")
        self.targets = np.column_stack([np.concatenate([G1u[:, 0], G1v[:, 0]]),
                                        np.concatenate([G2u[:, 0], G2v[:, 0]])])

    def residuals(self, alpha: float):
        w = signed_weights(self.n, self.nprime, alpha)
        coef = ws_krr_fit(self.KS, self.targets, w, self.lam)
        resid = self.targets - self.KS @ coef
        return w, resid[:, 0], resid[:, 1]

    def gtilde(self, alpha: float) -> np.ndarray:
        _, r1, r2 = self.residuals(alpha)
        return r1 * r2

    def __call__(self, alpha: float) -> float:
        w, r1, r2 = self.residuals(alpha)
        return float(np.sum(w.weights * r1 * r2))


def mci_moment(
    data: TwoSampleData,
    roles: FeatureRoles,
    alpha: float,
    lam: float,
    kS: KernelSpec,
    g: MomentFunctions = IDENTITY,
) -> float:
    return MciMoment(data, roles, lam, kS, g)(alpha)


def estimate_alpha_mci(
    data: TwoSampleData,
    roles: FeatureRoles,
    search_range: tuple[float, float],
    lam: float,
    kS: KernelSpec,
    g: MomentFunctions = IDENTITY,
    tol: float = 1e-4,
    grid_points: int = 25,
    moment: MciMoment | None = None,
) -> AlphaEstimate:
    lo, hi = search_range
    if not lo < hi:
        raise ValueError(f"empty search range [{lo}, {hi}]")
    moment = moment or MciMoment(data, roles, lam, kS, g)

    def objective(a: float) -> float:
        return moment(a) ** 2

    grid = np.linspace(lo, hi, grid_points)
    profile = np.array([objective(a) for a in grid])
    j = int(np.argmin(profile))
    blo, bhi = grid[max(j - 1, 0)], grid[min(j + 1, grid_points - 1)]
    alpha_hat, value = golden_section_min(objective, blo, bhi, tol)
    flags: list[str] = []
    if profile[j] < value:
        alpha_hat, value = float(grid[j]), float(profile[j])
        flags.append("grid-point")
    if j in (0, grid_points - 1):
        flags.append("boundary-minimum")

    est = AlphaEstimate(alpha_hat=float(alpha_hat), search_range=(lo, hi), objective=float(value),
                        method="mci", flags=flags,
                        grid_profile=[(float(a), float(v)) for a, v in zip(grid, profile)])
    gt = moment.gtilde(est.alpha_hat)
    _attach_variance(est, gt[: data.n], gt[data.n:],
                     float(gt[: data.n].mean() - gt[data.n:].mean()))
    return est


# ── two-coefficient pipeline ──────────────────────────────────────────────
@dataclass
class PriorEstimate:
    priors: ClassPriors
    plus: AlphaEstimate
    minus: AlphaEstimate
    clamped: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "theta": self.priors.theta,
            "theta_prime": self.priors.theta_prime,
            "clamped": self.clamped,
            "alpha_plus": self.plus.to_json(),
            "alpha_minus": self.minus.to_json(),
        }


def estimate_alpha(
    data: TwoSampleData,
    roles: FeatureRoles,
    search: SearchConfig,
    g: MomentFunctions = IDENTITY,
) -> AlphaEstimate:
    if search.method == "fixed":
        return AlphaEstimate(alpha_hat=float(search.fixed_value), objective=0.0, method="fixed",
                             search_range=(search.fixed_value, search.fixed_value))
    if search.method == "ci":
        return estimate_alpha_ci(data, roles, g, search.range)
    return estimate_alpha_mci(data, roles, search.range, search.lam,
                              KernelSpec(search.bandwidth), g, search.tol, search.grid_points)


def estimate_class_priors(
    data: TwoSampleData,
    roles_plus: FeatureRoles,
    roles_minus: FeatureRoles,
    plus: SearchConfig,
    minus: SearchConfig,
    g: MomentFunctions = IDENTITY,
) -> PriorEstimate:
    est_plus = estimate_alpha(data, roles_plus, plus, g)
    est_minus = estimate_alpha(data, roles_minus, minus, g)
    return priors_from_estimates(est_plus, est_minus)


def priors_from_estimates(est_plus: AlphaEstimate, est_minus: AlphaEstimate) -> PriorEstimate:
    if est_plus.alpha_hat == est_minus.alpha_hat:
        raise NonIdentifiableError("non-identifiable estimates")
    gap = est_plus.alpha_hat - est_minus.alpha_hat
    theta = (1.0 - est_minus.alpha_hat) / gap
    theta_prime = -est_minus.alpha_hat / gap
    c_theta = min(max(theta, 0.0), 1.0)
    c_prime = min(max(theta_prime, 0.0), 1.0)
    clamped = (c_theta, c_prime) != (theta, theta_prime)
    if clamped:
        logger.warning("clamped priors (%.4f, %.4f) → (%.4f, %.4f)", theta, theta_prime, c_theta, c_prime)
    try:
        priors = ClassPriors(c_theta, c_prime) if clamped else thetas_from_alphas(
            AlphaPair(est_plus.alpha_hat, est_minus.alpha_hat))
    except ValueError as exc:
        raise NonIdentifiableError(f"non-identifiable estimates: {exc}") from exc
    return PriorEstimate(priors=priors, plus=est_plus, minus=est_minus, clamped=clamped)
