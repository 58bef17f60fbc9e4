"""
KernelTestPlugin
================
Kernel CI / MCI tests when α* is unknown: α̂ from the MPE module is plugged
into the statistic and the gamma null is matched to a Taylor-corrected mean
and variance,

    M·T_α̂ ≈ M·Ť + M·S·Ť′ + (c₀/2)·M·S²,    S = −m̂(α*)/d₀,

where every limit below is a V-statistic block average over the product Gram
G, the moment values g̃ and their additive split l_{i,q} = u_i + v_q.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from mixprop.config import (
    PLUGIN_MPE_LAMBDA,
    PLUGIN_MPE_SIGMA,
    KernelConfig,
    SearchConfig,
)
from mixprop.errors import MixpropError, NonFiniteError, VanishingDerivativeError
from mixprop.kernels import KernelSpec
from mixprop.kerneltest_known import (
    ProductGram,
    TestReport,
    decide,
    known_mean,
    phi_check_conditionals,
    sigma_terms,
    statistic_for,
)
from mixprop.mixture import FeatureRoles, TwoSampleData
from mixprop.mpe import (
    D0_FLOOR,
    IDENTITY,
    MciMoment,
    MomentFunctions,
    ci_gtilde,
    ci_moment_coeffs,
    estimate_alpha,
)

logger = logging.getLogger(__name__)

QUARTIC_STEP = 0.25
FD_STEP = 0.01


@dataclass
class PluginCorrection:
    c1: float
    d0_hat: float
    c0_hat: float
    u: np.ndarray
    v: np.ndarray
    mean_st: float
    mean_s2: float
    mean: float
    var: float
    var_terms: dict[str, float] = field(default_factory=dict)
    extra: dict[str, float] = field(default_factory=dict)

    def breakdown(self) -> dict[str, float]:
        return {"c1": self.c1, "mean_st": self.mean_st, "mean_s2": self.mean_s2,
                **self.var_terms, **self.extra}


# ── second derivative of T in α ───────────────────────────────────────────
def _finite(f: Callable[[float], float], x: float) -> float:
    y = float(f(x))
    if not math.isfinite(y):
        raise NonFiniteError("statistic is not finite", abscissa=x)
    return y


def quartic_second_derivative(f: Callable[[float], float], alpha: float, h: float = QUARTIC_STEP) -> float:
    """Exact T″(α) for a quartic f, from five nodes α + {−2h, −h, 0, h, 2h}."""
    offsets = h * np.arange(-2, 3)
    values = [_finite(f, alpha + t) for t in offsets]
    coef = np.polynomial.polynomial.polyfit(offsets, values, 4)
    return float(2.0 * coef[2])


def central_second_derivative(f: Callable[[float], float], alpha: float, h: float = FD_STEP) -> float:
    return (_finite(f, alpha + h) - 2.0 * _finite(f, alpha) + _finite(f, alpha - h)) / h**2


def t_second_derivative(
    data: TwoSampleData,
    roles: FeatureRoles,
    kind: str,
    alpha_hat: float,
    kernel: KernelConfig,
    statistic=None,
) -> float:
    """c₀: T_CI is a quartic in α (fit exactly); T_MCI is differenced numerically."""
    statistic = statistic or statistic_for(data, roles, kind, kernel)
    if kind == "ci":
        return quartic_second_derivative(statistic.value, alpha_hat)
    return central_second_derivative(statistic.value, alpha_hat)


# ── corrected mean / variance ─────────────────────────────────────────────
def plugin_mean_var(
    pg: ProductGram,
    alpha_hat: float,
    gtilde_u: np.ndarray,
    gtilde_uprime: np.ndarray,
    d0_hat: float,
    c0_hat: float,
) -> PluginCorrection:
    if abs(d0_hat) < D0_FLOOR:
        raise VanishingDerivativeError("vanishing moment derivative")
    n, nprime = pg.n, pg.nprime
    if n < 2 or nprime < 2:
        raise ValueError("plug-in moments need n, nprime ≥ 2")
    gu = np.asarray(gtilde_u, dtype=float)
    gv = np.asarray(gtilde_uprime, dtype=float)
    if gu.shape != (n,) or gv.shape != (nprime,):
        raise ValueError("g̃ vectors must match the block sizes")

    M = n + nprime
    nu, nu_p = M / n, M / nprime
    a, b = alpha_hat, 1.0 - alpha_hat
    cond = phi_check_conditionals(pg, alpha_hat)

    # conditional means of ȟ: free (i₁,i₂), free (q₁,q₂), free (i₁,q₁)
    h_uu = cond.inner20
    h_vv = cond.inner02
    h_uv = 0.5 * cond.inner11
    # conditional means of ȟ′ with one index free
    hp_u = cond.mean_uv - cond.row_uv
    hp_v = cond.col_uv - cond.mean_uv

    u = -a * gu / d0_hat
    v = -b * gv / d0_hat
    l_u = u + v.mean()
    l_v = u.mean() + v

    c1 = known_mean(pg, alpha_hat)
    mean_st = -(2.0 / d0_hat) * (nu * a * np.mean(gu * hp_u) + nu_p * b * np.mean(gv * hp_v))
    mean_s2 = (nu * a * a * np.var(gu) + nu_p * b * b * np.var(gv)) / d0_hat**2
    mean = c1 + mean_st + 0.5 * c0_hat * mean_s2

    P = nu * np.mean(l_u**2) + nu_p * np.mean(l_v**2)
    Q = nu * np.mean(hp_u**2) + nu_p * np.mean(hp_v**2)
    R = nu * np.mean(l_u * hp_u) + nu_p * np.mean(l_v * hp_v)

    var_t = (2.0 * nu**2 * np.mean(h_uu**2) + 2.0 * nu_p**2 * np.mean(h_vv**2)
             + 16.0 * nu * nu_p * np.mean(h_uv**2))
    var_st = 4.0 * P * Q + 8.0 * R**2 - mean_st**2
    var_s2 = 3.0 * P**2 - mean_s2**2
    cov_t_st = (4.0 * nu**2 * (hp_u @ h_uu @ l_u) / n**2
                + 8.0 * nu * nu_p * (hp_u @ h_uv @ l_v) / (n * nprime)
                + 8.0 * nu * nu_p * (l_u @ h_uv @ hp_v) / (n * nprime)
                + 4.0 * nu_p**2 * (hp_v @ h_vv @ l_v) / nprime**2)
    cov_t_s2 = (2.0 * nu**2 * (l_u @ h_uu @ l_u) / n**2
                + 8.0 * nu * nu_p * (l_u @ h_uv @ l_v) / (n * nprime)
                + 2.0 * nu_p**2 * (l_v @ h_vv @ l_v) / nprime**2)
    cov_st_s2 = 6.0 * R * P - mean_st * mean_s2

    var = (var_t + var_st + 0.25 * c0_hat**2 * var_s2
           + 2.0 * (cov_t_st + 0.5 * c0_hat * cov_t_s2 + 0.5 * c0_hat * cov_st_s2))

    # alternative readings of V[Ť_U], reported but not used
    s20, s02, s11 = sigma_terms(cond)
    e_u = a * cond.row_uu + b * cond.row_uv
    e_v = a * cond.col_uv + b * cond.row_vv
    h_uv_sym = 0.5 * (a * e_u[:, None] + b * e_v[None, :] + cond.inner11)
    extra = {
        "var_t_cross_4": float(2.0 * nu**2 * s20 + 2.0 * nu_p**2 * s02 + 4.0 * nu * nu_p * s11),
        "var_t_symmetrized": float(2.0 * nu**2 * s20 + 2.0 * nu_p**2 * s02
                                   + 16.0 * nu * nu_p * np.mean(h_uv_sym**2)),
    }
    terms = {"var_t": float(var_t), "var_st": float(var_st), "var_s2": float(var_s2),
             "cov_t_st": float(cov_t_st), "cov_t_s2": float(cov_t_s2), "cov_st_s2": float(cov_st_s2)}
    return PluginCorrection(c1=float(c1), d0_hat=float(d0_hat), c0_hat=float(c0_hat), u=u, v=v,
                            mean_st=float(mean_st), mean_s2=float(mean_s2), mean=float(mean),
                            var=float(var), var_terms=terms, extra=extra)


# ── full test ─────────────────────────────────────────────────────────────
def default_search(kind: str) -> SearchConfig:
    if kind == "ci":
        return SearchConfig.ci("plus")
    return SearchConfig.mci("plus", lam=PLUGIN_MPE_LAMBDA, bandwidth=PLUGIN_MPE_SIGMA)


def run_test_plugin(
    data: TwoSampleData,
    roles: FeatureRoles,
    kind: str = "ci",
    level: float = 0.05,
    search: SearchConfig | None = None,
    kernel: KernelConfig | None = None,
    g: MomentFunctions = IDENTITY,
    alpha_hat: float | None = None,
) -> TestReport:
    """Plug-in test; ``alpha_hat`` skips estimation (the MPE search still sets λ, σ for g̃)."""
    if kind not in {"ci", "mci"}:
        raise ValueError(f"unknown test kind {kind!r}")
    search = search or default_search(kind)
    if kernel is None:
        kernel = KernelConfig.ci_test() if kind == "ci" else KernelConfig.mci_plugin()
    mode = f"{kind.upper()}-plugin"
    diagnostics: dict[str, Any] = {"n": data.n, "nprime": data.nprime, "flags": []}

    try:
        if alpha_hat is None:
            estimate = estimate_alpha(data, roles, search, g)
            alpha_hat = estimate.alpha_hat
            diagnostics["mpe"] = estimate.to_json()
        diagnostics["alpha_hat"] = alpha_hat

        statistic = statistic_for(data, roles, kind, kernel)
        stat, pg = statistic(alpha_hat)
        if kind == "ci":
            gu, gv = ci_gtilde(data, roles, alpha_hat, g)
            d0 = ci_moment_coeffs(data, roles, g).derivative(alpha_hat)
        else:
            moment = MciMoment(data, roles, search.lam, KernelSpec(search.bandwidth), g)
            gt = moment.gtilde(alpha_hat)
            gu, gv = gt[: data.n], gt[data.n:]
            d0 = float(gu.mean() - gv.mean())
        c0 = t_second_derivative(data, roles, kind, alpha_hat, kernel, statistic=statistic)
        corr = plugin_mean_var(pg, alpha_hat, gu, gv, d0, c0)
    except (MixpropError, np.linalg.LinAlgError) as exc:
        logger.error("plug-in %s test failed: %s", kind, exc)
        diagnostics["error"] = f"{type(exc).__name__}: {exc}"
        diagnostics["flags"].append("failed")
        return TestReport(statistic=math.nan, null_mean=math.nan, null_var=math.nan, gamma=None,
                          p_value=1.0, reject=False, level=level, mode=mode,
                          alpha_used=math.nan if alpha_hat is None else float(alpha_hat),
                          diagnostics=diagnostics)

    diagnostics.update({"d0_hat": corr.d0_hat, "c0_hat": corr.c0_hat, "correction": corr.breakdown()})
    return decide(stat, corr.mean, corr.var, level, mode, alpha_hat, diagnostics)
