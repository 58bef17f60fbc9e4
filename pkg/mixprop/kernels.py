"""
Kernels
=======
Gaussian Gram matrices, signed-weight centering, rank-k empirical kernel maps
and the weakly-supervised kernel ridge regression that estimates conditional
means under the signed mixture F̂^α.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from mixprop.errors import SingularSystemError
from mixprop.mixture import FeatureRoles, SignedWeights, TwoSampleData
from mixprop.numerics import solve_linear, sym_eigen_topk

logger = logging.getLogger(__name__)

NEGATIVE_EIG_WARN = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel k(x, y) = exp(−‖x−y‖² / (2σ²))."""

    bandwidth: float

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"kernel bandwidth must be finite and positive, got {self.bandwidth}")


@dataclass(frozen=True)
class GramBundle:
    K1: np.ndarray
    K2: np.ndarray
    KS: np.ndarray | None = None


def gram(rows: np.ndarray, spec: KernelSpec) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[1] < 1:
        raise ValueError("gram needs at least one feature column")
    if rows.shape[0] == 1:
        return np.ones((1, 1))
    sq = squareform(pdist(rows, "sqeuclidean"))
    return np.exp(-sq / (2.0 * spec.bandwidth**2))


def gram_bundle(
    data: TwoSampleData,
    roles: FeatureRoles,
    k1: KernelSpec,
    k2: KernelSpec,
    kS: KernelSpec | None = None,
) -> GramBundle:
    roles.check_width(data.d)
    KS = gram(data.pooled(roles.idxS), kS) if (kS is not None and roles.idxS) else None
    return GramBundle(gram(data.pooled(roles.idx1), k1), gram(data.pooled(roles.idx2), k2), KS)


def weighted_center(K: np.ndarray, w: SignedWeights) -> np.ndarray:
    """H K Hᵀ with H = I − 𝟏wᵀ, without forming H."""
    weights = w.weights
    if K.shape != (weights.size, weights.size):
        raise ValueError(f"Gram of shape {K.shape} against {weights.size} weights")
    Kw = K @ weights
    s = float(weights @ Kw)
    return K - Kw[None, :] - Kw[:, None] + s


def ws_krr_fit(KS: np.ndarray, target: np.ndarray, w: SignedWeights, lam: float) -> np.ndarray:
    """Solve (D_α K_S + λI) c = D_α g; fitted values are K_S c.

    ``target`` may carry several columns, all sharing one factorisation.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    D = w.weights
    if KS.shape[0] != D.size:
        raise ValueError(f"K_S of order {KS.shape[0]} against {D.size} weights")
    target = np.asarray(target, dtype=float)
    A = D[:, None] * KS
    A[np.diag_indices_from(A)] += lam
    rhs = D[:, None] * target if target.ndim == 2 else D * target
    try:
        return solve_linear(A, rhs)
    except SingularSystemError as exc:
        raise SingularSystemError("indefinite KRR system singular; perturb λ") from exc


def empirical_kernel_map_topk(K: np.ndarray, k: int) -> np.ndarray:
    """Φ = V Λ^{1/2} over the top-k eigenpairs of the raw Gram."""
    pairs = sym_eigen_topk(K, k)
    values = pairs.values
    if values.min() < -NEGATIVE_EIG_WARN:
        logger.warning("clipping negative Gram eigenvalue %.3g to zero", values.min())
    return pairs.vectors * np.sqrt(np.clip(values, 0.0, None))


def residualize_map(
    Phi: np.ndarray, KS: np.ndarray, w: SignedWeights, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the weakly-supervised KRR fit on X_S from each column of Φ.

    Returns (Φ̃, K̃ = Φ̃Φ̃ᵀ).
    """
    coef = ws_krr_fit(KS, Phi, w, lam)
    resid = Phi - KS @ coef
    return resid, resid @ resid.T
