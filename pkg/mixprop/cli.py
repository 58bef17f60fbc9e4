"""
mixprop/cli.py  ·  command-line surface
---------------------------------------
    mixprop gen        synthetic Gaussian data → <stem>.u.csv / <stem>.uprime.csv
    mixprop mpe        ci|mci mixture proportion estimation → JSON report
    mixprop test       ci|mci kernel test, known α or plug-in → JSON report
    mixprop experiment reproduce a synthetic table → CSV + JSON sidecar
    mixprop screen     labeled pair (or --mci triplet) screening → CSV

Exit codes: 0 success, 2 config/data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from mixprop.config import (
    KernelConfig,
    SearchConfig,
    Settings,
    env_int,
    load_config_file,
    load_env,
    parse_bool,
    parse_float_list,
    parse_range,
)
from mixprop.errors import ConfigError, DataFormatError, MixpropError, NumericalError
from mixprop.kerneltest_known import run_test_known
from mixprop.kerneltest_plugin import default_search, run_test_plugin
from mixprop.mixture import ClassPriors, FeatureRoles, gen_gaussian, load_csv, read_block, save_csv
from mixprop.mpe import estimate_alpha, priors_from_estimates

logger = logging.getLogger("mixprop")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def configure_logging(log_file: str | None = None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode="w", encoding="utf-8"))
    logging.basicConfig(
        level=os.getenv("LOGLEVEL", "INFO").upper(),
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%H:%M:%S",
        handlers=handlers,
        force=True,
    )


def _json_default(obj: Any):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)


def write_json(payload: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, default=_json_default)
    logger.info("report written to %s", path)


# ── argument parser ───────────────────────────────────────────────────────
def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key=value file mirroring these flags")
    p.add_argument("--lambda", dest="lambda_", type=float, help="KRR ridge λ of the test statistic")
    p.add_argument("--sigma", type=float, help="bandwidth for every kernel")
    p.add_argument("--sigma1", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--sigma-s", dest="sigma_s", type=float)
    p.add_argument("--k-top", dest="k_top", type=int)
    p.add_argument("--mpe-lambda", dest="mpe_lambda", type=float)
    p.add_argument("--mpe-sigma", dest="mpe_sigma", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--grid-points", dest="grid_points", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixprop", description=__doc__.split("\n")[1])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate synthetic two-sample data")
    gen.add_argument("--model", choices=["gauss"], default="gauss")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--nprime", type=int, required=True)
    gen.add_argument("--theta", type=float, required=True)
    gen.add_argument("--theta-prime", dest="theta_prime", type=float, required=True)
    gen.add_argument("--sigma12", type=float, default=0.0)
    gen.add_argument("--with-xs", dest="with_xs", action="store_true")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, metavar="STEM")

    mpe = sub.add_parser("mpe", help="estimate a mixture coefficient / class priors")
    mpe.add_argument("method", choices=["ci", "mci"])
    mpe.add_argument("--u", required=True, metavar="FILE")
    mpe.add_argument("--uprime", required=True, metavar="FILE")
    mpe.add_argument("--roles", required=True, metavar="SPEC")
    mpe.add_argument("--range", metavar="LO,HI", help="search range (α₋ range in --pu mode)")
    mpe.add_argument("--range-minus", dest="range_minus", metavar="LO,HI",
                     help="also estimate α₋ on this range and report class priors")
    mpe.add_argument("--pu", action="store_true", help="U is pure positives: fix α₊ = 1")
    mpe.add_argument("--report", required=True, metavar="FILE")
    _add_config_flags(mpe)

    test = sub.add_parser("test", help="weakly-supervised kernel (conditional) independence test")
    test.add_argument("kind", choices=["ci", "mci"])
    test.add_argument("--u", required=True, metavar="FILE")
    test.add_argument("--uprime", metavar="FILE", help="omit only with --alpha 1 (screening mode)")
    test.add_argument("--roles", required=True, metavar="SPEC")
    how = test.add_mutually_exclusive_group(required=True)
    how.add_argument("--alpha", type=float)
    how.add_argument("--plugin", action="store_true")
    test.add_argument("--range", metavar="LO,HI", help="MPE search range for --plugin")
    test.add_argument("--level", type=float)
    test.add_argument("--report", required=True, metavar="FILE")
    _add_config_flags(test)

    exp = sub.add_parser("experiment", help="reproduce a synthetic table")
    exp.add_argument("experiment", choices=["table1", "table3", "table4", "table5",
                                            "bias8", "bias9", "power10", "custom"])
    exp.add_argument("--full", action="store_true", help="complete trial counts instead of the desk presets")
    exp.add_argument("--seed", type=int)
    exp.add_argument("--out", metavar="DIR")
    exp.add_argument("--trials", type=int)
    exp.add_argument("--parallelism", type=int)
    exp.add_argument("--level", type=float)
    exp.add_argument("--no-progress", dest="no_progress", action="store_true")
    _add_config_flags(exp)

    scr = sub.add_parser("screen", help="screen labeled feature pairs (or triplets) for within-class independence")
    scr.add_argument("--labeled", required=True, metavar="FILE", help="CSV with a trailing y column")
    scr.add_argument("--mci", action="store_true", help="test (X1, X2 | XS) triplets instead of pairs")
    scr.add_argument("--class", dest="target_class", type=int, choices=[1, -1],
                     help="class whose rows are tested (default 1 for pairs, -1 for triplets)")
    scr.add_argument("--threshold", type=float, help="|SMD| cut (default 0.5 for pairs, 1.0 for triplets)")
    scr.add_argument("--scale-class", dest="scale_class", type=int, choices=[1, -1], default=1,
                     help="class whose standard deviation scales the SMD")
    scr.add_argument("--lambda", dest="lambda_", type=float, help="KRR regulariser for --mci")
    scr.add_argument("--level", type=float, default=0.05)
    scr.add_argument("--sigma", type=float)
    scr.add_argument("--report", required=True, metavar="FILE")
    return parser


# ── settings helpers ──────────────────────────────────────────────────────
def _settings(args: argparse.Namespace) -> Settings:
    flags = dict(vars(args))
    flags["lambda"] = flags.pop("lambda_", None)
    return Settings(flags, load_config_file(flags.get("config")))


def kernel_from(settings: Settings, base: KernelConfig) -> KernelConfig:
    sigma = settings.get("sigma", float)
    if sigma is not None:
        base = base.with_bandwidth(sigma)
    return KernelConfig(
        sigma1=settings.get("sigma1", float, base.sigma1),
        sigma2=settings.get("sigma2", float, base.sigma2),
        sigma_s=settings.get("sigma-s", float, base.sigma_s),
        lam=settings.get("lambda", float, base.lam),
        k_top=settings.get("k-top", int, base.k_top),
    )


def search_from(settings: Settings, base: SearchConfig, search_range: tuple[float, float] | None) -> SearchConfig:
    lo, hi = search_range if search_range is not None else base.range
    return SearchConfig(
        method=base.method, lo=lo, hi=hi,
        lam=settings.get("mpe-lambda", float, base.lam),
        bandwidth=settings.get("mpe-sigma", float, base.bandwidth),
        tol=settings.get("tol", float, base.tol),
        grid_points=settings.get("grid-points", int, base.grid_points),
    )


def _range_opt(settings: Settings, key: str) -> tuple[float, float] | None:
    raw = settings.flags.get(key.replace("-", "_")) or settings.file_values.get(key)
    return parse_range(raw) if raw else None


def _roles(spec: str) -> FeatureRoles:
    return FeatureRoles.parse(spec)


# ── commands ──────────────────────────────────────────────────────────────
def cmd_gen(args: argparse.Namespace) -> int:
    try:
        priors = ClassPriors(args.theta, args.theta_prime)
        data = gen_gaussian(args.n, args.nprime, priors, args.sigma12, args.with_xs, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    save_csv(data, args.out)
    return EXIT_OK


def cmd_mpe(args: argparse.Namespace) -> int:
    settings = _settings(args)
    data = load_csv(args.u, args.uprime)
    roles = _roles(args.roles)
    primary = _range_opt(settings, "range")
    minus_range = _range_opt(settings, "range-minus")

    def side(which: str, rng):
        base = SearchConfig.ci(which) if args.method == "ci" else SearchConfig.mci(which)
        return search_from(settings, base, rng)

    if args.pu:
        plus = estimate_alpha(data, roles, SearchConfig.fixed(1.0))
        minus = estimate_alpha(data, roles, side("minus", minus_range or primary))
        payload = priors_from_estimates(plus, minus).to_json()
    elif minus_range is not None:
        plus = estimate_alpha(data, roles, side("plus", primary))
        minus = estimate_alpha(data, roles, side("minus", minus_range))
        payload = priors_from_estimates(plus, minus).to_json()
    else:
        if primary is None:
            raise ConfigError("mpe needs --range (or --pu / --range-minus)")
        payload = estimate_alpha(data, roles, side("plus", primary)).to_json()
    write_json(payload, args.report)
    return EXIT_OK


def cmd_test(args: argparse.Namespace) -> int:
    settings = _settings(args)
    level = settings.get("level", float, 0.05)
    roles = _roles(args.roles)
    if args.uprime is None and (args.plugin or args.alpha != 1.0):
        raise ConfigError("--uprime may be omitted only with --alpha 1")
    data = load_csv(args.u, args.uprime)
    if args.plugin:
        kernel = kernel_from(settings, KernelConfig.ci_test() if args.kind == "ci" else KernelConfig.mci_plugin())
        search = search_from(settings, default_search(args.kind), _range_opt(settings, "range"))
        report = run_test_plugin(data, roles, args.kind, level, search, kernel)
    else:
        kernel = kernel_from(settings, KernelConfig.ci_test() if args.kind == "ci" else KernelConfig.mci_known())
        report = run_test_known(data, roles, args.alpha, args.kind, level, kernel)
    write_json(report.to_json(), args.report)
    logger.info("statistic %.4g, p-value %.4g, reject=%s", report.statistic, report.p_value, report.reject)
    return EXIT_OK


def _parse_priors(text: str) -> tuple[tuple[float, float], ...]:
    try:
        pairs = tuple(tuple(float(x) for x in item.split(":")) for item in text.split(",") if item.strip())
    except ValueError as exc:
        raise ConfigError(f"priors must look like 0.8:0.2,1:0.2, got {text!r}") from exc
    if not pairs or any(len(p) != 2 for p in pairs):
        raise ConfigError(f"priors must look like 0.8:0.2,1:0.2, got {text!r}")
    return pairs


def experiment_config(args: argparse.Namespace):
    from mixprop.stages.experiments import ExperimentConfig

    settings = _settings(args)
    file_values = settings.file_values
    custom: dict[str, Any] = {}
    if "kind" in file_values:
        custom["kind"] = file_values["kind"]
    if "n" in file_values:
        custom["n"] = tuple(int(v) for v in parse_float_list(file_values["n"]))
    if "priors" in file_values:
        custom["priors"] = _parse_priors(file_values["priors"])
    elif "theta" in file_values and "theta-prime" in file_values:
        custom["priors"] = _parse_priors(f"{file_values['theta']}:{file_values['theta-prime']}")
    if "sigma12" in file_values:
        custom["sigma12"] = parse_float_list(file_values["sigma12"])
    return ExperimentConfig(
        experiment=args.experiment,
        seed=settings.get("seed", int, env_int("MIXPROP_SEED", 0)),
        full=args.full or parse_bool(file_values.get("full", "false")),
        trials=settings.get("trials", int),
        parallelism=settings.get("parallelism", int, env_int("MIXPROP_PARALLELISM", 1)),
        level=settings.get("level", float, 0.05),
        out=settings.get("out", str, "results"),
        progress=not args.no_progress,
        sigma=settings.get("sigma", float),
        lam=settings.get("lambda", float),
        mpe_sigma=settings.get("mpe-sigma", float),
        mpe_lambda=settings.get("mpe-lambda", float),
        **custom,
    )


def cmd_experiment(args: argparse.Namespace) -> int:
    from mixprop.graph import run_experiment

    config = experiment_config(args)
    results = run_experiment(config)
    for row in results.rows.itertuples(index=False):
        logger.info("%s | %s = %.4f ± %.4f (%d trials)", row.setting, row.metric, row.value,
                    row.stderr, row.trials)
    return EXIT_OK


def cmd_screen(args: argparse.Namespace) -> int:
    from mixprop.screening import screen_pairs, screen_triplets

    rows, names, labels = read_block(args.labeled)
    if labels is None:
        raise ConfigError(f"{args.labeled} has no 'y' label column")
    if args.mci:
        kernel = KernelConfig.mci_screening()
        if args.sigma is not None:
            kernel = kernel.with_bandwidth(args.sigma)
        if args.lambda_ is not None:
            kernel = replace(kernel, lam=args.lambda_)
        result = screen_triplets(rows, labels, names,
                                 args.target_class if args.target_class is not None else -1,
                                 args.threshold if args.threshold is not None else 1.0,
                                 args.level, kernel, scale_class=args.scale_class)
    else:
        kwargs = {"bandwidth": args.sigma} if args.sigma is not None else {}
        result = screen_pairs(rows, labels, names,
                              args.target_class if args.target_class is not None else 1,
                              args.threshold if args.threshold is not None else 0.5,
                              args.level, scale_class=args.scale_class, **kwargs)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    result.table.to_csv(args.report, index=False, float_format="%.17g")
    logger.info("%d candidate features, %d combinations tested, %d independent",
                len(result.candidates), len(result.table), len(result.independent))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "mpe": cmd_mpe, "test": cmd_test, "experiment": cmd_experiment,
            "screen": cmd_screen}


def main(argv: Sequence[str] | None = None) -> int:
    load_env()
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DataFormatError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except MixpropError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except ValueError as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_CONFIG
