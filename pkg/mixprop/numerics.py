"""
mixprop/numerics.py  ·  scalar & dense-matrix primitives
--------------------------------------------------------
Quadratic roots, golden-section search, symmetric top-k eigenpairs, pivoted
linear solves and the upper incomplete gamma tail.  Everything here is a pure
function; LAPACK (via scipy) does the heavy lifting.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg, special

from mixprop.errors import (
    ConvergenceError,
    NonFiniteError,
    NumericalError,
    SingularSystemError,
)

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2

QUADRATIC_EPS = 1e-10
SYMMETRY_RTOL = 1e-12
PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in descending order with matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]


# ── quadratic roots ───────────────────────────────────────────────────────
def solve_quadratic(a: float, b: float, c: float, eps: float = QUADRATIC_EPS) -> tuple[float, ...]:
    """Real roots of a·x² + b·x + c = 0, sorted ascending and deduplicated.

    Falls back to the linear equation when |a| < eps·max(|a|,|b|,|c|).
    """
    if not all(math.isfinite(v) for v in (a, b, c)):
        raise ValueError("quadratic coefficients must be finite")
    if eps <= 0:
        raise ValueError("eps must be positive")
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0.0:
        raise NumericalError("identically zero polynomial")

    if abs(a) < eps * scale:
        if abs(b) < eps * scale:
            return ()
        return (-c / b,)

    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return ()
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if q == 0.0:
        # b == 0 and disc == 0 imply c == 0: double root at zero
        return (0.0,)
    roots = sorted({q / a, c / q})
    return tuple(roots)


# ── golden-section search ─────────────────────────────────────────────────
def golden_section_min(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-6,
) -> tuple[float, float]:
    """Minimise a unimodal ``f`` on [lo, hi]; returns (argmin, f(argmin)).

    The bracket is shrunk until its width is ≤ tol and the midpoint of the
    final bracket is returned.  Unimodality is not verified.
    """
    if not lo < hi:
        raise ValueError(f"golden_section_min needs lo < hi, got [{lo}, {hi}]")
    if tol <= 0:
        raise ValueError("tol must be positive")

    def _eval(x: float) -> float:
        y = float(f(x))
        if not math.isfinite(y):
            raise NonFiniteError("objective is not finite", abscissa=x)
        return y

    a, b = lo, hi
    h = b - a
    if h > tol:
        n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
        c = a + INV_PHI_SQUARE * h
        d = a + INV_PHI * h
        yc, yd = _eval(c), _eval(d)
        for _ in range(n - 1):
            h *= INV_PHI
            if yc < yd:
                b, d, yd = d, c, yc
                c = a + INV_PHI_SQUARE * h
                yc = _eval(c)
            else:
                a, c, yc = c, d, yd
                d = a + INV_PHI * h
                yd = _eval(d)
        if yc < yd:
            b = d
        else:
            a = c
    x = 0.5 * (a + b)
    return x, _eval(x)


# ── symmetric eigenpairs ──────────────────────────────────────────────────
def check_symmetric(A: np.ndarray, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and float(np.max(np.abs(A - A.T))) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return A


def sym_eigen_topk(A: np.ndarray, k: int) -> EigenPairs:
    """Top-k eigenpairs (algebraic order) of a symmetric matrix.

    Signs are fixed so the largest-magnitude entry of each vector is positive.
    """
    A = check_symmetric(A)
    order = A.shape[0]
    if not 1 <= k <= order:
        raise ValueError(f"k must lie in [1, {order}], got {k}")
    try:
        values, vectors = linalg.eigh(A, subset_by_index=[order - k, order - 1])
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver failed to converge: {exc}") from exc

    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(k)])
    signs[signs == 0] = 1.0
    vectors *= signs
    return EigenPairs(values=values, vectors=vectors)


# ── linear systems ────────────────────────────────────────────────────────
def solve_linear(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b with partial-pivot LU; ``b`` may hold several columns.

    Works for indefinite A.  Raises SingularSystemError when the smallest
    pivot falls below 1e-12·‖A‖.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"b has {b.shape[0]} rows, A has order {A.shape[0]}")

    norm = float(np.linalg.norm(A, ord=np.inf))
    if norm == 0.0:
        raise SingularSystemError("singular system")
    lu, piv = linalg.lu_factor(A, check_finite=True)
    if float(np.min(np.abs(np.diag(lu)))) < PIVOT_RTOL * norm:
        raise SingularSystemError("singular system")
    return linalg.lu_solve((lu, piv), b)


# ── gamma tail ────────────────────────────────────────────────────────────
def gamma_upper_tail(x: float, shape: float, scale: float) -> float:
    """P(X > x) for X ~ Gamma(shape, scale)."""
    if x < 0 or not math.isfinite(x):
        raise ValueError(f"x must be finite and ≥ 0, got {x}")
    if shape <= 0 or scale <= 0:
        raise ValueError("shape and scale must be positive")
    return float(special.gammaincc(shape, x / scale))
