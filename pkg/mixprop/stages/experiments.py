"""
Experiments
===========
Presets for the synthetic tables and the per-trial functions they run.

Every trial is a pure function of (setting, seed, config) returning a flat
dict of metric values, so trials can be scheduled in any order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable

from mixprop.config import (
    PLUGIN_MPE_LAMBDA,
    PLUGIN_MPE_SIGMA,
    KernelConfig,
    SearchConfig,
)
from mixprop.errors import ConfigError
from mixprop.kerneltest_known import run_test_known
from mixprop.kerneltest_plugin import run_test_plugin
from mixprop.mixture import (
    ClassPriors,
    FeatureRoles,
    alphas_from_thetas,
    break_irreducibility_and_cify,
    draw_mixture_samples,
    gen_gaussian,
    gen_labeled_gaussian,
)
from mixprop.mpe import estimate_class_priors

logger = logging.getLogger(__name__)

EXPERIMENTS = ("table1", "table3", "table4", "table5", "bias8", "bias9", "power10", "custom")
KINDS = ("mpe-ci-pu", "mpe-ci", "mpe-mci", "test-ci", "test-mci", "plugin-ci", "plugin-mci")

CI_ROLES = FeatureRoles((0,), (1,))
MCI_ROLES = FeatureRoles((0,), (1,), (2,))
POOL_SIZE = 20000
MOVED_FRACTION = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    full: bool = False
    trials: int | None = None
    parallelism: int = 1
    level: float = 0.05
    out: str = "results"
    progress: bool = True
    # overrides for kernels / MPE; None keeps the per-kind defaults
    sigma: float | None = None
    lam: float | None = None
    mpe_sigma: float | None = None
    mpe_lambda: float | None = None
    # custom grid
    kind: str | None = None
    n: tuple[int, ...] = ()
    priors: tuple[tuple[float, float], ...] = ()
    sigma12: tuple[float, ...] = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be ≥ 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be ≥ 1")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.experiment == "custom":
            if self.kind not in KINDS:
                raise ConfigError(f"custom experiments need kind in {KINDS}")
            if not (self.n and self.priors and self.sigma12):
                raise ConfigError("custom experiments need non-empty n, priors and sigma12 grids")

    def provenance_dict(self) -> dict[str, Any]:
        """Everything that influences results; scheduling knobs are left out."""
        d = asdict(self)
        for key in ("parallelism", "out", "progress"):
            d.pop(key)
        return d


@dataclass(frozen=True)
class Setting:
    kind: str
    n: int
    theta: float
    theta_prime: float
    sigma12: float = 0.0
    trials: int = 10
    label_extra: str = ""
    nprime: int | None = None

    @property
    def m_prime(self) -> int:
        return self.n if self.nprime is None else self.nprime

    @property
    def priors(self) -> ClassPriors:
        return ClassPriors(self.theta, self.theta_prime)

    @property
    def label(self) -> str:
        parts = [self.kind, f"n={self.n}", f"theta={self.theta:g}", f"theta_prime={self.theta_prime:g}",
                 f"sigma12={self.sigma12:g}"]
        if self.label_extra:
            parts.append(self.label_extra)
        return ";".join(parts)


# ── helpers ───────────────────────────────────────────────────────────────
def kernel_for(kind: str, config: ExperimentConfig) -> KernelConfig:
    if kind.endswith("-ci") and not kind.startswith("mpe"):
        kernel = KernelConfig.ci_test()
    elif kind == "plugin-mci":
        kernel = KernelConfig.mci_plugin()
    else:
        kernel = KernelConfig.mci_known()
    if config.sigma is not None:
        kernel = kernel.with_bandwidth(config.sigma)
    if config.lam is not None:
        kernel = replace(kernel, lam=config.lam)
    return kernel


def mci_search(side: str, config: ExperimentConfig, plugin: bool = False) -> SearchConfig:
    search = (SearchConfig.mci(side, lam=PLUGIN_MPE_LAMBDA, bandwidth=PLUGIN_MPE_SIGMA)
              if plugin else SearchConfig.mci(side))
    if config.mpe_lambda is not None:
        search = replace(search, lam=config.mpe_lambda)
    if config.mpe_sigma is not None:
        search = replace(search, bandwidth=config.mpe_sigma)
    return search


# ── trial functions ───────────────────────────────────────────────────────
def trial_mpe_ci_pu(setting: Setting, seed: int, config: ExperimentConfig) -> dict[str, float]:
    """PU protocol on a labeled Gaussian pool with irreducibility broken and CI enforced."""
    rows, labels = gen_labeled_gaussian(POOL_SIZE, setting.sigma12, False, seed)
    rows, labels = break_irreducibility_and_cify(rows, labels, MOVED_FRACTION, CI_ROLES, seed + 1)
    data = draw_mixture_samples(rows, labels, setting.n, setting.m_prime,
                                ClassPriors(1.0, setting.theta_prime), seed + 2)
    est = estimate_class_priors(data, CI_ROLES, CI_ROLES, SearchConfig.fixed(1.0), SearchConfig.ci("minus"))
    return {"abs_err_theta_prime": abs(est.priors.theta_prime - setting.theta_prime),
            "theta_prime_hat": est.priors.theta_prime}


def _prior_errors(est, setting: Setting) -> dict[str, float]:
    out = {"abs_err_theta_prime": abs(est.priors.theta_prime - setting.theta_prime),
           "theta_prime_hat": est.priors.theta_prime}
    if setting.theta < 1.0:
        out["abs_err_theta"] = abs(est.priors.theta - setting.theta)
        out["theta_hat"] = est.priors.theta
    return out


def trial_mpe_ci(setting: Setting, seed: int, config: ExperimentConfig) -> dict[str, float]:
    data = gen_gaussian(setting.n, setting.m_prime, setting.priors, setting.sigma12, False, seed)
    plus = SearchConfig.fixed(1.0) if setting.theta == 1.0 else SearchConfig.ci("plus")
    est = estimate_class_priors(data, CI_ROLES, CI_ROLES, plus, SearchConfig.ci("minus"))
    return _prior_errors(est, setting)


def trial_mpe_mci(setting: Setting, seed: int, config: ExperimentConfig) -> dict[str, float]:
    data = gen_gaussian(setting.n, setting.m_prime, setting.priors, setting.sigma12, True, seed)
    plus = SearchConfig.fixed(1.0) if setting.theta == 1.0 else mci_search("plus", config)
    est = estimate_class_priors(data, MCI_ROLES, MCI_ROLES, plus, mci_search("minus", config))
    return _prior_errors(est, setting)


def trial_test_known(setting: Setting, seed: int, config: ExperimentConfig) -> dict[str, float]:
    kind = setting.kind.split("-")[1]
    data = gen_gaussian(setting.n, setting.m_prime, setting.priors, setting.sigma12, kind == "mci", seed)
    alpha = alphas_from_thetas(setting.priors).alpha_plus
    report = run_test_known(data, CI_ROLES if kind == "ci" else MCI_ROLES, alpha, kind,
                            config.level, kernel_for(setting.kind, config))
    return {"reject": float(report.reject), "statistic": report.statistic, "p_value": report.p_value}


def trial_test_plugin(setting: Setting, seed: int, config: ExperimentConfig) -> dict[str, float]:
    kind = setting.kind.split("-")[1]
    data = gen_gaussian(setting.n, setting.m_prime, setting.priors, setting.sigma12, kind == "mci", seed)
    search = SearchConfig.ci("plus") if kind == "ci" else mci_search("plus", config, plugin=True)
    report = run_test_plugin(data, CI_ROLES if kind == "ci" else MCI_ROLES, kind, config.level,
                             search, kernel_for(setting.kind, config))
    if "error" in report.diagnostics:
        raise RuntimeError(report.diagnostics["error"])
    return {"reject": float(report.reject), "statistic": report.statistic,
            "p_value": report.p_value, "alpha_hat": report.alpha_used}


TRIAL_FUNCTIONS: dict[str, Callable[[Setting, int, ExperimentConfig], dict[str, float]]] = {
    "mpe-ci-pu": trial_mpe_ci_pu,
    "mpe-ci": trial_mpe_ci,
    "mpe-mci": trial_mpe_mci,
    "test-ci": trial_test_known,
    "test-mci": trial_test_known,
    "plugin-ci": trial_test_plugin,
    "plugin-mci": trial_test_plugin,
}

# metrics aggregated into the results table per kind (others stay per-trial)
TABLE_METRICS = {
    "mpe-ci-pu": ("abs_err_theta_prime",),
    "mpe-ci": ("abs_err_theta", "abs_err_theta_prime"),
    "mpe-mci": ("abs_err_theta", "abs_err_theta_prime"),
    "test-ci": ("reject",),
    "test-mci": ("reject",),
    "plugin-ci": ("reject",),
    "plugin-mci": ("reject",),
}


# ── presets ───────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Preset:
    settings: tuple[Setting, ...]
    overall: bool = False
    simulated_null: bool = False
    notes: dict[str, Any] = field(default_factory=dict)


def _grid(kind, ns, priors, sigmas, trials, extra=lambda s: ""):
    return tuple(Setting(kind, n, t, tp, s, trials, extra(s))
                 for (t, tp) in priors for n in ns for s in sigmas)


def build_preset(config: ExperimentConfig) -> Preset:
    full, exp = config.full, config.experiment
    p82 = ((0.8, 0.2),)
    sig = (0.0, 0.2, 0.5)
    bias_sigmas = tuple(math.sqrt(s2) for s2 in (0.0, 0.1, 0.2))

    def sq_label(s: float) -> str:
        return f"sigma12_sq={round(s * s, 12):g}"

    if exp == "table1":
        settings = tuple(Setting("mpe-ci-pu", 2000, 1.0, tp, 0.0, 30 if full else 10)
                         for tp in (0.2, 0.5, 0.7))
        preset = Preset(settings, overall=True)
    elif exp == "table3":
        preset = Preset(_grid("mpe-mci", (100, 500, 1000), ((1.0, 0.2), (0.8, 0.2), (0.5, 0.2)),
                              (0.0,), 100 if full else 20))
    elif exp == "table4":
        ci_ns = (500, 1000, 2000) if full else (500,)
        mci_ns = (500, 1000, 2000) if full else (500,)
        preset = Preset(_grid("test-ci", ci_ns, p82, sig, 1000)
                        + _grid("test-mci", mci_ns, p82, sig, 1000 if full else 200))
    elif exp == "table5":
        ci_ns = (500, 1000, 2000) if full else (500,)
        mci_ns = (1000, 2000, 3000) if full else (1000,)
        preset = Preset(_grid("plugin-ci", ci_ns, p82, sig, 1000 if full else 500)
                        + _grid("plugin-mci", mci_ns, p82, sig, 1000 if full else 100))
    elif exp == "bias8":
        preset = Preset(_grid("mpe-ci", (2000,), p82, bias_sigmas, 100 if full else 50, sq_label))
    elif exp == "bias9":
        preset = Preset(_grid("mpe-mci", (2000,), p82, bias_sigmas, 100 if full else 10, sq_label))
    elif exp == "power10":
        preset = Preset(_grid("plugin-mci", (1000,), p82, (0.0, 0.2), 1000 if full else 100),
                        simulated_null=True)
    else:
        preset = Preset(_grid(config.kind, config.n, config.priors, config.sigma12, config.trials or 10))

    if config.trials is not None:
        preset = replace(preset, settings=tuple(replace(s, trials=config.trials) for s in preset.settings))
    return preset
