"""
MixtureModel
============
Two unlabeled samples drawn from U = θP + (1−θ)N and U′ = θ′P + (1−θ′)N,
the signed mixture F̂^α = αÛ + (1−α)Û′, prior/coefficient conversions,
seeded synthetic generators and CSV I/O.

Labels ride along for provenance only; estimators never read them.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from mixprop.errors import ConfigError, DataFormatError, NonIdentifiableError

logger = logging.getLogger(__name__)

LABEL_COLUMN = "y"


def rng_for(seed: int) -> np.random.Generator:
    """PCG64 stream for ``seed`` (via SeedSequence); identical on every platform."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def trial_seed(seed: int, trial: int) -> int:
    return int(seed) ^ int(trial)


# ── domain types ──────────────────────────────────────────────────────────
@dataclass(frozen=True)
class FeatureRoles:
    idx1: tuple[int, ...]
    idx2: tuple[int, ...]
    idxS: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("idx1", "idx2", "idxS"):
            object.__setattr__(self, name, tuple(int(i) for i in getattr(self, name)))
        if not self.idx1 or not self.idx2:
            raise ValueError("x1 and x2 need at least one column each")
        seen = self.idx1 + self.idx2 + self.idxS
        if len(set(seen)) != len(seen):
            raise ValueError("feature role index sets must be disjoint")
        if min(seen) < 0:
            raise ValueError("feature indices must be non-negative")

    @classmethod
    def parse(cls, spec: str) -> "FeatureRoles":
        """Parse ``x1=0;x2=1;xs=2`` (comma-separated lists allowed)."""
        parts: dict[str, tuple[int, ...]] = {}
        for chunk in filter(None, (c.strip() for c in spec.split(";"))):
            key, sep, value = chunk.partition("=")
            key = key.strip().lower()
            if not sep or key not in {"x1", "x2", "xs"}:
                raise ConfigError(f"bad roles entry {chunk!r}; expected x1=…;x2=…[;xs=…]")
            try:
                parts[key] = tuple(int(v) for v in value.split(",") if v.strip())
            except ValueError as exc:
                raise ConfigError(f"bad column index in roles entry {chunk!r}") from exc
        try:
            return cls(parts.get("x1", ()), parts.get("x2", ()), parts.get("xs", ()))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def check_width(self, d: int) -> None:
        if max(self.idx1 + self.idx2 + self.idxS) >= d:
            raise ValueError(f"feature roles reference a column ≥ {d}")

    def swapped(self) -> "FeatureRoles":
        return FeatureRoles(self.idx2, self.idx1, self.idxS)


@dataclass(frozen=True)
class TwoSampleData:
    rows_u: np.ndarray
    rows_uprime: np.ndarray
    feature_names: tuple[str, ...]
    labels_u: np.ndarray | None = field(default=None, compare=False)
    labels_uprime: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.rows_u, dtype=float))
        d = u.shape[1]
        v = np.asarray(self.rows_uprime, dtype=float).reshape(-1, d)
        if u.shape[0] < 1:
            raise ValueError("the U block needs at least one row")
        if len(self.feature_names) != d:
            raise ValueError(f"{len(self.feature_names)} feature names for {d} columns")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("sample entries must be finite")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "rows_u", u)
        object.__setattr__(self, "rows_uprime", v)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.rows_u.shape[0]

    @property
    def nprime(self) -> int:
        return self.rows_uprime.shape[0]

    @property
    def M(self) -> int:
        return self.n + self.nprime

    @property
    def d(self) -> int:
        return self.rows_u.shape[1]

    @property
    def nu(self) -> float:
        return self.M / self.n

    @property
    def nu_prime(self) -> float:
        return self.M / self.nprime if self.nprime else math.inf

    def pooled(self, idx: Sequence[int] | None = None) -> np.ndarray:
        """Pooled M × p feature matrix (U rows first), optionally column-restricted."""
        rows = np.vstack([self.rows_u, self.rows_uprime])
        return rows if idx is None else rows[:, list(idx)]

    def block(self, which: str, idx: Sequence[int]) -> np.ndarray:
        rows = self.rows_u if which == "u" else self.rows_uprime
        return rows[:, list(idx)]


@dataclass(frozen=True)
class SignedWeights:
    alpha: float
    n: int
    nprime: int
    weights: np.ndarray

    @property
    def u(self) -> float:
        return self.alpha / self.n

    @property
    def uprime(self) -> float:
        return (1.0 - self.alpha) / self.nprime if self.nprime else 0.0


@dataclass(frozen=True)
class ClassPriors:
    theta: float
    theta_prime: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.theta_prime)):
            raise ValueError("class priors must be finite")
        if not self.theta > self.theta_prime:
            raise ValueError(f"need theta > theta_prime, got ({self.theta}, {self.theta_prime})")

    @property
    def in_unit_interval(self) -> bool:
        return 0.0 <= self.theta_prime and self.theta <= 1.0


@dataclass(frozen=True)
class AlphaPair:
    alpha_plus: float
    alpha_minus: float


# ── signed mixture ────────────────────────────────────────────────────────
def signed_weights(n: int, nprime: int, alpha: float) -> SignedWeights:
    if n < 1:
        raise ValueError("n must be ≥ 1")
    if nprime < 0:
        raise ValueError("nprime must be ≥ 0")
    if nprime == 0 and alpha != 1.0:
        raise ValueError("degenerate mixture")
    w = np.empty(n + nprime)
    w[:n] = alpha / n
    if nprime:
        w[n:] = (1.0 - alpha) / nprime
    w.flags.writeable = False
    return SignedWeights(alpha=float(alpha), n=n, nprime=nprime, weights=w)


def weighted_mean(values: np.ndarray, w: SignedWeights) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != w.weights.shape[0]:
        raise ValueError(f"{values.shape[0]} rows against {w.weights.shape[0]} weights")
    return w.weights @ values


def thetas_from_alphas(a: AlphaPair) -> ClassPriors:
    gap = a.alpha_plus - a.alpha_minus
    if gap == 0.0:
        raise NonIdentifiableError("non-identifiable")
    return ClassPriors((1.0 - a.alpha_minus) / gap, -a.alpha_minus / gap)


def alphas_from_thetas(p: ClassPriors) -> AlphaPair:
    gap = p.theta - p.theta_prime
    return AlphaPair((1.0 - p.theta_prime) / gap, -p.theta_prime / gap)


# ── generators ────────────────────────────────────────────────────────────
def _gaussian_block(rng: np.random.Generator, m: int, theta: float, sigma12: float, with_xs: bool):
    y = np.where(rng.random(m) < theta, 1, -1)
    z = rng.standard_normal((m, 2))
    pos = y == 1
    x1 = y + z[:, 0]
    x2 = y + np.where(pos, sigma12 * z[:, 0] + math.sqrt(1.0 - sigma12**2) * z[:, 1], z[:, 1])
    cols = [x1, x2]
    if with_xs:
        xs = rng.normal(0.5, 1.0, m)
        cols = [x1 + xs, x2 + xs, xs]
    return np.column_stack(cols), y


def gen_gaussian(
    n: int,
    nprime: int,
    priors: ClassPriors,
    sigma12: float,
    with_xs: bool,
    seed: int,
) -> TwoSampleData:
    """(X₁, X₂) ~ N((Y, Y), Σ_Y) with Σ₊ = [[1, σ₁₂], [σ₁₂, 1]] and Σ₋ = I.

    With ``with_xs`` a shared X_S ~ N(0.5, 1) is added to both coordinates and
    emitted as a third column.
    """
    if not abs(sigma12) < 1:
        raise ValueError("|sigma12| must be < 1")
    if n < 1 or nprime < 1:
        raise ValueError("n and nprime must be ≥ 1")
    if not priors.in_unit_interval:
        raise ValueError("class priors must lie in [0, 1]")
    rng = rng_for(seed)
    u, yu = _gaussian_block(rng, n, priors.theta, sigma12, with_xs)
    v, yv = _gaussian_block(rng, nprime, priors.theta_prime, sigma12, with_xs)
    names = ("x1", "x2", "xs") if with_xs else ("x1", "x2")
    return TwoSampleData(u, v, names, labels_u=yu, labels_uprime=yv)


def gen_labeled_gaussian(m: int, sigma12: float, with_xs: bool, seed: int, theta: float = 0.5):
    """Labeled pool of ``m`` rows; class +1 with probability ``theta``."""
    rows, y = _gaussian_block(rng_for(seed), m, theta, sigma12, with_xs)
    return rows, y


def break_irreducibility_and_cify(
    rows: np.ndarray,
    labels: np.ndarray,
    fraction: float,
    split: FeatureRoles,
    seed: int,
    resample: bool = True,
    bootstrap: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Move ⌊fraction·#pos⌋ positives to the negative class, then resample the
    x1 and x2 column blocks independently within each class.

    Columns outside x1 ∪ x2 keep their row order.  ``bootstrap=False`` switches
    the resample to a permutation.
    """
    rows = np.array(rows, dtype=float)
    labels = np.array(labels)
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    if not (np.any(labels == 1) and np.any(labels == -1)):
        raise ValueError("both classes must be present")
    split.check_width(rows.shape[1])
    rng = rng_for(seed)

    pos = np.flatnonzero(labels == 1)
    moved = rng.choice(pos, size=int(math.floor(fraction * pos.size)), replace=False)
    labels[moved] = -1
    if not resample:
        return rows, labels

    for cls in (1, -1):
        members = np.flatnonzero(labels == cls)
        for idx in (split.idx1, split.idx2):
            if bootstrap:
                draw = members[rng.integers(0, members.size, members.size)]
            else:
                draw = rng.permutation(members)
            rows[np.ix_(members, idx)] = rows[np.ix_(draw, idx)]
    logger.debug("moved %d positives; class sizes now %d/%d",
                 moved.size, int(np.sum(labels == 1)), int(np.sum(labels == -1)))
    return rows, labels


def draw_mixture_samples(
    rows: np.ndarray,
    labels: np.ndarray,
    n: int,
    nprime: int,
    priors: ClassPriors,
    seed: int,
    feature_names: Sequence[str] | None = None,
) -> TwoSampleData:
    """Draw U and U′ from a labeled pool with replacement (Bernoulli class per row)."""
    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels)
    pools = {1: np.flatnonzero(labels == 1), -1: np.flatnonzero(labels == -1)}
    if pools[1].size == 0 or pools[-1].size == 0:
        raise ValueError("both classes must be present")
    rng = rng_for(seed)

    def _draw(m: int, theta: float):
        y = np.where(rng.random(m) < theta, 1, -1)
        idx = np.empty(m, dtype=int)
        for cls, pool in pools.items():
            hit = y == cls
            idx[hit] = pool[rng.integers(0, pool.size, int(hit.sum()))]
        return rows[idx], y

    u, yu = _draw(n, priors.theta)
    v, yv = _draw(nprime, priors.theta_prime)
    names = tuple(feature_names) if feature_names else tuple(f"x{j + 1}" for j in range(rows.shape[1]))
    return TwoSampleData(u, v, names, labels_u=yu, labels_uprime=yv)


# ── CSV I/O ───────────────────────────────────────────────────────────────
_LINE_RE = re.compile(r"line (\d+)")


def read_block(path: str | Path) -> tuple[np.ndarray, tuple[str, ...], np.ndarray | None]:
    """Read one CSV block; returns (rows, feature names, labels or None)."""
    path = Path(path)
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=False,
                          encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise DataFormatError("malformed header: file is empty", line=1) from exc
    except pd.errors.ParserError as exc:
        match = _LINE_RE.search(str(exc))
        raise DataFormatError(f"ragged row in {path.name}",
                              line=int(match.group(1)) if match else None) from exc

    # header kept as a data row so duplicate names are not silently mangled
    names = [str(c).strip() for c in raw.iloc[0]]
    frame = raw.iloc[1:].reset_index(drop=True)
    if any(not c for c in names) or len(set(names)) != len(names):
        raise DataFormatError(f"malformed header in {path.name}", line=1)
    if frame.empty:
        raise DataFormatError("no data rows", line=2)

    ragged = frame.isna().any(axis=1).to_numpy()
    if ragged.any():
        raise DataFormatError("ragged row", line=int(np.argmax(ragged)) + 2)
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataFormatError(f"non-numeric cell {frame.iat[row, col]!r} in column {names[col]!r}",
                              line=int(row) + 2)

    # numpy's str→float is correctly rounded, so %.17g text round-trips exactly
    values = frame.to_numpy(dtype=str).astype(float)
    labels = None
    if names[-1] == LABEL_COLUMN:
        labels = values[:, -1].astype(int)
        if not np.all(np.isin(labels, (-1, 1))):
            raise DataFormatError(f"labels in column {LABEL_COLUMN!r} must be ±1")
        values, names = values[:, :-1], names[:-1]
    return values, tuple(names), labels


def load_csv(u_path: str | Path, uprime_path: str | Path | None = None) -> TwoSampleData:
    """Load ``<stem>.u.csv`` / ``<stem>.uprime.csv`` (U′ may be absent for screening)."""
    u, names, yu = read_block(u_path)
    if uprime_path is None:
        return TwoSampleData(u, np.empty((0, u.shape[1])), names, labels_u=yu)
    v, names_v, yv = read_block(uprime_path)
    if names_v != names:
        raise DataFormatError(f"header mismatch between {u_path} and {uprime_path}", line=1)
    return TwoSampleData(u, v, names, labels_u=yu, labels_uprime=yv)


def csv_paths(stem: str | Path) -> tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_name(stem.name + ".u.csv"), stem.with_name(stem.name + ".uprime.csv")


def _block_frame(rows: np.ndarray, names: Sequence[str], labels: np.ndarray | None) -> pd.DataFrame:
    df = pd.DataFrame(rows, columns=list(names))
    if labels is not None:
        df[LABEL_COLUMN] = np.asarray(labels, dtype=int)
    return df


def save_csv(data: TwoSampleData, stem: str | Path) -> tuple[Path, Path]:
    u_path, v_path = csv_paths(stem)
    u_path.parent.mkdir(parents=True, exist_ok=True)
    _block_frame(data.rows_u, data.feature_names, data.labels_u).to_csv(
        u_path, index=False, float_format="%.17g")
    _block_frame(data.rows_uprime, data.feature_names, data.labels_uprime).to_csv(
        v_path, index=False, float_format="%.17g")
    logger.info("wrote %s and %s", u_path, v_path)
    return u_path, v_path
