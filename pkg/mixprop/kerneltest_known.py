"""
KernelTestKnown
===============
Weakly-supervised kernel CI / MCI tests when the mixture coefficient α* is
known.  The statistic is M·T with T = wᵀ G w, G the centralised product Gram
over pooled rows and w the signed weights of F̂^α.  Its null is approximated
by a gamma law moment-matched to the two-sample V-statistic mean/variance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from mixprop.config import KernelConfig
from mixprop.kernels import (
    KernelSpec,
    empirical_kernel_map_topk,
    gram,
    gram_bundle,
    residualize_map,
    weighted_center,
)
from mixprop.mixture import FeatureRoles, TwoSampleData, signed_weights
from mixprop.numerics import gamma_upper_tail

logger = logging.getLogger(__name__)

STAT_FLOOR = -1e-10


# ── types ─────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class ProductGram:
    G: np.ndarray
    n: int
    nprime: int

    @property
    def uu(self) -> np.ndarray:
        return self.G[: self.n, : self.n]

    @property
    def uv(self) -> np.ndarray:
        return self.G[: self.n, self.n:]

    @property
    def vv(self) -> np.ndarray:
        return self.G[self.n:, self.n:]


@dataclass(frozen=True)
class GammaFit:
    shape: float
    scale: float
    source_mean: float
    source_var: float


@dataclass
class TestReport:
    statistic: float
    null_mean: float
    null_var: float
    gamma: GammaFit | None
    p_value: float
    reject: bool
    level: float
    mode: str
    alpha_used: float
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "statistic": self.statistic,
            "null_mean": self.null_mean,
            "null_var": self.null_var,
            "gamma_shape": self.gamma.shape if self.gamma else None,
            "gamma_scale": self.gamma.scale if self.gamma else None,
            "p_value": self.p_value,
            "reject": self.reject,
            "level": self.level,
            "mode": self.mode,
            "alpha_used": self.alpha_used,
            "diagnostics": self.diagnostics,
        }


# ── statistics ────────────────────────────────────────────────────────────
class CiStatistic:
    """T_CI(α) with the X₁ / X₂ Grams computed once."""

    def __init__(self, data: TwoSampleData, roles: FeatureRoles, k1: KernelSpec, k2: KernelSpec):
        roles.check_width(data.d)
        self.n, self.nprime = data.n, data.nprime
        bundle = gram_bundle(data, roles, k1, k2)
        self.K1, self.K2 = bundle.K1, bundle.K2

    def product_gram(self, alpha: float) -> tuple[ProductGram, np.ndarray]:
        w = signed_weights(self.n, self.nprime, alpha)
        G = weighted_center(self.K1, w) * weighted_center(self.K2, w)
        return ProductGram(G, self.n, self.nprime), w.weights

    def value(self, alpha: float) -> float:
        """Unscaled T at ``alpha``."""
        pg, w = self.product_gram(alpha)
        return float(w @ pg.G @ w)

    def __call__(self, alpha: float) -> tuple[float, ProductGram]:
        pg, w = self.product_gram(alpha)
        return (self.n + self.nprime) * float(w @ pg.G @ w), pg


class MciStatistic:
    """T_MCI(α): rank-k kernel maps of X₁, X₂ residualised on X_S by weakly-supervised KRR."""

    def __init__(
        self,
        data: TwoSampleData,
        roles: FeatureRoles,
        k1: KernelSpec,
        k2: KernelSpec,
        kS: KernelSpec,
        lam: float,
        k_top: int = 5,
    ):
        if not roles.idxS:
            raise ValueError("the MCI statistic needs at least one X_S column")
        roles.check_width(data.d)
        self.n, self.nprime, self.lam = data.n, data.nprime, lam
        self.KS = gram(data.pooled(roles.idxS), kS)
        k_top = min(k_top, data.M)
        self.Phi1 = empirical_kernel_map_topk(gram(data.pooled(roles.idx1), k1), k_top)
        self.Phi2 = empirical_kernel_map_topk(gram(data.pooled(roles.idx2), k2), k_top)

    def product_gram(self, alpha: float) -> tuple[ProductGram, np.ndarray]:
        w = signed_weights(self.n, self.nprime, alpha)
        k = self.Phi1.shape[1]
        Phi = np.hstack([self.Phi1, self.Phi2])
        resid, _ = residualize_map(Phi, self.KS, w, self.lam)
        R1, R2 = resid[:, :k], resid[:, k:]
        G = (R1 @ R1.T) * self.KS * (R2 @ R2.T)
        return ProductGram(G, self.n, self.nprime), w.weights

    def value(self, alpha: float) -> float:
        pg, w = self.product_gram(alpha)
        return float(w @ pg.G @ w)

    def __call__(self, alpha: float) -> tuple[float, ProductGram]:
        pg, w = self.product_gram(alpha)
        return (self.n + self.nprime) * float(w @ pg.G @ w), pg


def t_ci(data: TwoSampleData, roles: FeatureRoles, alpha: float, k1: KernelSpec, k2: KernelSpec):
    return CiStatistic(data, roles, k1, k2)(alpha)


def t_mci(
    data: TwoSampleData,
    roles: FeatureRoles,
    alpha: float,
    k1: KernelSpec,
    k2: KernelSpec,
    kS: KernelSpec,
    lam: float,
    k_top: int = 5,
):
    return MciStatistic(data, roles, k1, k2, kS, lam, k_top)(alpha)


# ── null moments ──────────────────────────────────────────────────────────
@dataclass(frozen=True)
class PhiCheckConditionals:
    """Conditional means of ⟨φ̌_{i₁q₁}, φ̌_{i₂q₂}⟩ over the index pair left free.

    inner20[i₁,i₂] averages out (q₁,q₂); inner02[q₁,q₂] averages out (i₁,i₂);
    inner11[i₁,q₂] averages out (i₂,q₁).  Also keeps the block row/column/grand
    means the plug-in corrections need.
    """

    inner20: np.ndarray
    inner02: np.ndarray
    inner11: np.ndarray
    row_uu: np.ndarray
    row_uv: np.ndarray
    col_uv: np.ndarray
    row_vv: np.ndarray
    mean_uu: float
    mean_uv: float
    mean_vv: float


def phi_check_conditionals(pg: ProductGram, alpha: float) -> PhiCheckConditionals:
    a, b = alpha, 1.0 - alpha
    A = pg.uu
    row_uu, mean_uu = A.mean(axis=1), float(A.mean())
    if pg.nprime == 0:
        empty = np.zeros(0)
        return PhiCheckConditionals(a * a * A, np.zeros((0, 0)), np.zeros((pg.n, 0)),
                                    row_uu, np.zeros(pg.n), empty, empty, mean_uu, 0.0, 0.0)
    B, C = pg.uv, pg.vv
    row_uv, col_uv, row_vv = B.mean(axis=1), B.mean(axis=0), C.mean(axis=1)
    mean_uv, mean_vv = float(B.mean()), float(C.mean())

    inner20 = a * a * A + a * b * (row_uv[:, None] + row_uv[None, :]) + b * b * mean_vv
    inner02 = a * a * mean_uu + a * b * (col_uv[:, None] + col_uv[None, :]) + b * b * C
    inner11 = a * a * row_uu[:, None] + a * b * B + a * b * mean_uv + b * b * row_vv[None, :]
    return PhiCheckConditionals(inner20, inner02, inner11, row_uu, row_uv, col_uv, row_vv,
                                mean_uu, mean_uv, mean_vv)


def sigma_terms(cond: PhiCheckConditionals) -> tuple[float, float, float]:
    """(σ̂²₂₀, σ̂²₀₂, σ̂²₁₁) as V-statistic averages of squared conditional means."""
    s02 = float(np.mean(cond.inner02**2)) if cond.inner02.size else 0.0
    s11 = float(np.mean(cond.inner11**2)) if cond.inner11.size else 0.0
    return float(np.mean(cond.inner20**2)), s02, s11


def known_mean(pg: ProductGram, alpha: float) -> float:
    M = pg.n + pg.nprime
    A = pg.uu
    mean = (M / pg.n) * alpha**2 * (float(np.mean(np.diag(A))) - float(A.mean()))
    if pg.nprime:
        C = pg.vv
        mean += (M / pg.nprime) * (1.0 - alpha) ** 2 * (float(np.mean(np.diag(C))) - float(C.mean()))
    return mean


def product_gram_null_moments(pg: ProductGram, alpha: float) -> tuple[float, float]:
    """Asymptotic null (mean, variance) of M·T from the product Gram."""
    if pg.n < 2 or pg.nprime == 1:
        raise ValueError("null moments need n ≥ 2 and nprime ≥ 2 (or nprime = 0 for screening)")
    if pg.nprime == 0 and alpha != 1.0:
        raise ValueError("degenerate mixture")
    s20, s02, s11 = sigma_terms(phi_check_conditionals(pg, alpha))
    M = pg.n + pg.nprime
    nu = M / pg.n
    var = 2.0 * nu**2 * s20
    if pg.nprime:
        nu_p = M / pg.nprime
        var += 2.0 * nu_p**2 * s02 + 4.0 * nu * nu_p * s11
    return known_mean(pg, alpha), var


def gamma_fit(mean: float, var: float) -> GammaFit | None:
    """Moment-matched gamma; ``None`` marks a degenerate fit."""
    if not (np.isfinite(mean) and np.isfinite(var)) or mean <= 0 or var <= 0:
        return None
    return GammaFit(shape=mean**2 / var, scale=var / mean, source_mean=mean, source_var=var)


def decide(
    statistic: float,
    mean: float,
    var: float,
    level: float,
    mode: str,
    alpha: float,
    diagnostics: dict[str, Any] | None = None,
) -> TestReport:
    diagnostics = dict(diagnostics or {})
    flags = diagnostics.setdefault("flags", [])
    if statistic < STAT_FLOOR:
        logger.warning("statistic %.3g below round-off floor", statistic)
        flags.append("negative-statistic")
    fit = gamma_fit(mean, var)
    if fit is None:
        logger.warning("degenerate gamma fit (mean=%.3g, var=%.3g); p-value forced to 1", mean, var)
        flags.append("gamma-degenerate")
        p_value = 1.0
    else:
        p_value = gamma_upper_tail(max(statistic, 0.0), fit.shape, fit.scale)
    return TestReport(statistic=float(statistic), null_mean=float(mean), null_var=float(var),
                      gamma=fit, p_value=p_value, reject=bool(p_value < level), level=level,
                      mode=mode, alpha_used=float(alpha), diagnostics=diagnostics)


def statistic_for(data: TwoSampleData, roles: FeatureRoles, kind: str, kernel: KernelConfig):
    if kind == "ci":
        return CiStatistic(data, roles, KernelSpec(kernel.sigma1), KernelSpec(kernel.sigma2))
    if kind == "mci":
        return MciStatistic(data, roles, KernelSpec(kernel.sigma1), KernelSpec(kernel.sigma2),
                            KernelSpec(kernel.sigma_s), kernel.lam, kernel.k_top)
    raise ValueError(f"unknown test kind {kind!r}")


def run_test_known(
    data: TwoSampleData,
    roles: FeatureRoles,
    alpha: float,
    kind: str = "ci",
    level: float = 0.05,
    kernel: KernelConfig | None = None,
) -> TestReport:
    if kernel is None:
        kernel = KernelConfig.ci_test() if kind == "ci" else KernelConfig.mci_known()
    stat, pg = statistic_for(data, roles, kind, kernel)(alpha)
    mean, var = product_gram_null_moments(pg, alpha)
    s20, s02, s11 = sigma_terms(phi_check_conditionals(pg, alpha))
    diagnostics = {"n": data.n, "nprime": data.nprime, "sigma20": s20, "sigma02": s02, "sigma11": s11}
    return decide(stat, mean, var, level, f"{kind.upper()}-known", alpha, diagnostics)
