"""
mixprop/config.py  ·  typed configuration
-----------------------------------------
Frozen dataclasses for search and kernel settings plus the key=value config
file loader.  Precedence: command-line flag > config file > defaults below.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping

from dotenv import dotenv_values, load_dotenv

from mixprop.errors import ConfigError

logger = logging.getLogger(__name__)

ROOT = Path(__file__).resolve().parents[1]

# ── 0. defaults (search ranges and hyperparameters) ───────────────────────
CI_RANGE_PLUS = (1.0, 50.0)
CI_RANGE_MINUS = (-50.0, 0.0)
MCI_RANGE_PLUS = (1.1, 1.5)
MCI_RANGE_MINUS = (-0.7, 0.0)

MCI_MPE_LAMBDA, MCI_MPE_SIGMA = 5e-4, 3.5
PLUGIN_MPE_LAMBDA, PLUGIN_MPE_SIGMA = 1e-2, 3.0
CI_TEST_SIGMA = 2.5
MCI_KNOWN_LAMBDA, MCI_KNOWN_SIGMA = 5e-4, 3.5
MCI_PLUGIN_LAMBDA, MCI_PLUGIN_SIGMA = 5e-6, 2.5
MCI_SCREEN_LAMBDA, MCI_SCREEN_SIGMA = 1e-3, 1.0
K_TOP = 5


def load_env() -> None:
    """Pick up a project ``.env`` (LOGLEVEL, MIXPROP_PARALLELISM, MIXPROP_SEED)."""
    env_path = ROOT / ".env"
    if env_path.exists():
        load_dotenv(env_path, override=False)


def env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"environment variable {name} must be an integer, got {raw!r}") from exc


# ── 1. typed settings ─────────────────────────────────────────────────────
@dataclass(frozen=True)
class SearchConfig:
    """How one mixture coefficient (α₊ or α₋) is obtained."""

    method: str = "ci"  # ci | mci | fixed
    lo: float = CI_RANGE_PLUS[0]
    hi: float = CI_RANGE_PLUS[1]
    lam: float = MCI_MPE_LAMBDA
    bandwidth: float = MCI_MPE_SIGMA
    tol: float = 1e-4
    grid_points: int = 25
    fixed_value: float | None = None

    def __post_init__(self):
        if self.method not in {"ci", "mci", "fixed"}:
            raise ConfigError(f"unknown search method {self.method!r}")
        if self.method == "fixed":
            if self.fixed_value is None:
                raise ConfigError("fixed search needs fixed_value")
        elif not self.lo < self.hi:
            raise ConfigError(f"empty search range [{self.lo}, {self.hi}]")
        if self.lam <= 0 or self.bandwidth <= 0 or self.tol <= 0 or self.grid_points < 3:
            raise ConfigError("lambda, bandwidth and tol must be positive; grid_points ≥ 3")

    @property
    def range(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @classmethod
    def ci(cls, side: str) -> "SearchConfig":
        lo, hi = CI_RANGE_PLUS if side == "plus" else CI_RANGE_MINUS
        return cls(method="ci", lo=lo, hi=hi)

    @classmethod
    def mci(cls, side: str, lam: float = MCI_MPE_LAMBDA, bandwidth: float = MCI_MPE_SIGMA) -> "SearchConfig":
        lo, hi = MCI_RANGE_PLUS if side == "plus" else MCI_RANGE_MINUS
        return cls(method="mci", lo=lo, hi=hi, lam=lam, bandwidth=bandwidth)

    @classmethod
    def fixed(cls, value: float) -> "SearchConfig":
        return cls(method="fixed", lo=value, hi=value, fixed_value=value)


@dataclass(frozen=True)
class KernelConfig:
    sigma1: float = CI_TEST_SIGMA
    sigma2: float = CI_TEST_SIGMA
    sigma_s: float = CI_TEST_SIGMA
    lam: float = MCI_KNOWN_LAMBDA
    k_top: int = K_TOP

    def __post_init__(self):
        if min(self.sigma1, self.sigma2, self.sigma_s, self.lam) <= 0:
            raise ConfigError("kernel bandwidths and lambda must be positive")
        if self.k_top < 1:
            raise ConfigError("k_top must be ≥ 1")

    @classmethod
    def ci_test(cls) -> "KernelConfig":
        return cls()

    @classmethod
    def mci_known(cls) -> "KernelConfig":
        s = MCI_KNOWN_SIGMA
        return cls(sigma1=s, sigma2=s, sigma_s=s, lam=MCI_KNOWN_LAMBDA)

    @classmethod
    def mci_screening(cls) -> "KernelConfig":
        s = MCI_SCREEN_SIGMA
        return cls(sigma1=s, sigma2=s, sigma_s=s, lam=MCI_SCREEN_LAMBDA)

    @classmethod
    def mci_plugin(cls) -> "KernelConfig":
        s = MCI_PLUGIN_SIGMA
        return cls(sigma1=s, sigma2=s, sigma_s=s, lam=MCI_PLUGIN_LAMBDA)

    def with_bandwidth(self, sigma: float) -> "KernelConfig":
        return replace(self, sigma1=sigma, sigma2=sigma, sigma_s=sigma)


# ── 2. config file + flag precedence ──────────────────────────────────────
def load_config_file(path: str | Path | None) -> dict[str, str]:
    """Read key=value pairs; keys are normalised to lower-case with dashes."""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    values = dotenv_values(path)
    out = {}
    for key, value in values.items():
        if value is None:
            raise ConfigError(f"config entry {key!r} in {path} has no value")
        out[key.strip().lower().replace("_", "-")] = value.strip()
    logger.debug("loaded %d config entries from %s", len(out), path)
    return out


@dataclass
class Settings:
    """Flags (already parsed) layered over config-file strings."""

    flags: Mapping[str, Any]
    file_values: Mapping[str, str] = field(default_factory=dict)

    def get(self, key: str, cast: Callable[[str], Any], default: Any = None) -> Any:
        flag_key = key.replace("-", "_")
        value = self.flags.get(flag_key)
        if value is not None:
            return value
        if key in self.file_values:
            try:
                return cast(self.file_values[key])
            except ValueError as exc:
                raise ConfigError(f"bad value {self.file_values[key]!r} for {key!r}") from exc
        return default


def parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"range must look like LO,HI, got {text!r}") from exc
    if not lo < hi:
        raise ConfigError(f"empty range {text!r}")
    return lo, hi


def parse_float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise ConfigError("empty list")
    return values


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ValueError(text)
