"""
SummarizeStage
==============
Fold per-trial records into the results table: one row per (setting, metric)
with mean, sample standard deviation, standard error and trial count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import pandas as pd

from mixprop.stages.experiments import TABLE_METRICS, ExperimentConfig, Preset

logger = logging.getLogger(__name__)

COLUMNS = ["setting", "metric", "value", "sd", "stderr", "trials", "failures", "config_hash"]


@dataclass
class ResultsTable:
    rows: pd.DataFrame
    per_trial: pd.DataFrame
    provenance: dict = field(default_factory=dict)

    def value(self, setting: str, metric: str) -> float:
        hit = self.rows[(self.rows["setting"] == setting) & (self.rows["metric"] == metric)]
        if hit.empty:
            raise KeyError((setting, metric))
        return float(hit["value"].iloc[0])


def summarize(values: Iterable[float]) -> dict[str, float]:
    """Mean, sample sd (ddof=1), stderr = sd/√count, count; a single value has stderr 0."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("empty input")
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"value": float(arr.mean()), "sd": sd, "stderr": sd / math.sqrt(arr.size), "trials": int(arr.size)}


def _metric_values(records: list[dict], metric: str) -> list[float]:
    ordered = sorted((r for r in records if r["ok"]), key=lambda r: r["trial"])
    return [r["metrics"][metric] for r in ordered if metric in r["metrics"]]


def _simulated_null_rows(config: ExperimentConfig, preset: Preset, by_setting: dict) -> list[dict]:
    """Power against a critical value taken from simulated null statistics."""
    null = [s for s in preset.settings if s.sigma12 == 0.0]
    if not null:
        return []
    null_stats = _metric_values(by_setting[null[0].label], "statistic")
    if not null_stats:
        return []
    crit = float(np.quantile(np.asarray(null_stats), 1.0 - config.level))
    rows = [{"setting": null[0].label, "metric": "simulated_critical_value", "value": crit,
             "sd": 0.0, "stderr": 0.0, "trials": len(null_stats), "failures": 0}]
    for s in preset.settings:
        if s.sigma12 == 0.0:
            continue
        stats = _metric_values(by_setting[s.label], "statistic")
        if stats:
            rows.append({"setting": s.label, "metric": "reject_simulated_null",
                         **summarize(float(v > crit) for v in stats), "failures": 0})
    return rows


def run(state: dict, **kwargs) -> dict:
    config: ExperimentConfig = state["config"]
    preset: Preset = state["preset"]
    records: list[dict] = state["records"]

    by_setting: dict[str, list[dict]] = {s.label: [] for s in preset.settings}
    for r in records:
        by_setting[r["setting"]].append(r)

    rows = []
    for s in preset.settings:
        group = by_setting[s.label]
        failures = sum(not r["ok"] for r in group)
        for metric in TABLE_METRICS[s.kind]:
            values = _metric_values(group, metric)
            if not values:
                if failures:
                    logger.warning("no successful trials for %s / %s", s.label, metric)
                continue
            rows.append({"setting": s.label, "metric": metric, **summarize(values), "failures": failures})

    if preset.overall:
        metrics = dict.fromkeys(m for s in preset.settings for m in TABLE_METRICS[s.kind])
        for metric in metrics:
            pooled = [v for s in preset.settings for v in _metric_values(by_setting[s.label], metric)]
            if pooled:
                rows.append({"setting": "overall", "metric": metric, **summarize(pooled),
                             "failures": sum(not r["ok"] for r in records)})
    if preset.simulated_null:
        rows.extend(_simulated_null_rows(config, preset, by_setting))

    for row in rows:
        row["config_hash"] = state["config_hash"]
    table = pd.DataFrame(rows, columns=COLUMNS)

    long_rows = [{"setting": r["setting"], "trial": r["trial"], "seed": r["seed"], "metric": m, "value": v,
                  "ok": r["ok"], "error": r["error"]}
                 for r in records for m, v in sorted(r["metrics"].items())]
    long_rows += [{"setting": r["setting"], "trial": r["trial"], "seed": r["seed"], "metric": None,
                   "value": None, "ok": False, "error": r["error"]} for r in records if not r["ok"]]
    per_trial = pd.DataFrame(long_rows, columns=["setting", "trial", "seed", "metric", "value", "ok", "error"])

    provenance = {
        "experiment": config.experiment,
        "config": config.provenance_dict(),
        "config_hash": state["config_hash"],
        "seed": config.seed,
        "version": state["version"],
        "failures": sum(not r["ok"] for r in records),
    }
    return {**state, "results": ResultsTable(table, per_trial, provenance)}
