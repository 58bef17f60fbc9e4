"""
ReportStage
===========
Write the results table (CSV), per-trial records (CSV + SQLite) and a JSON
provenance sidecar under the output directory.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import pandas as pd

from mixprop.db import ExperimentRun, TrialRecord, open_store
from mixprop.stages.summarize import ResultsTable

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _persist_trials(path: Path, results: ResultsTable) -> None:
    Session = open_store(path)
    prov = results.provenance
    with Session() as ses:
        run = ExperimentRun(experiment=prov["experiment"], config_hash=prov["config_hash"],
                            seed=prov["seed"], version=prov["version"],
                            config_json=json.dumps(prov["config"], sort_keys=True, default=list))
        for row in results.per_trial.itertuples(index=False):
            run.trials.append(TrialRecord(
                setting=row.setting, trial=int(row.trial), seed=int(row.seed), metric=row.metric,
                value=None if pd.isna(row.value) else float(row.value), ok=bool(row.ok), error=row.error))
        ses.add(run)
        ses.commit()


def run(state: dict, **kwargs) -> dict:
    results: ResultsTable = state["results"]
    out = Path(state["config"].out)
    out.mkdir(parents=True, exist_ok=True)
    name = state["config"].experiment

    table_path = out / f"{name}.csv"
    results.rows.to_csv(table_path, index=False, float_format=FLOAT_FORMAT)
    results.per_trial.to_csv(out / f"{name}.trials.csv", index=False, float_format=FLOAT_FORMAT)
    with open(out / f"{name}.json", "w", encoding="utf-8") as f:
        json.dump(results.provenance, f, indent=2, sort_keys=True, default=list)

    try:
        _persist_trials(out / "trials.db", results)
    except Exception as exc:
        logger.warning("could not persist trials to SQLite: %s", exc)

    logger.info("📄 wrote %s (%d rows)", table_path, len(results.rows))
    return {**state, "report_path": str(table_path)}
