"""
TrialsStage
===========
Run every (setting, trial) pair with bounded concurrency.  Each trial owns
the seed ``config.seed XOR trial``; results come back in submission order so
aggregates never depend on the schedule.
"""

from __future__ import annotations

import asyncio
import logging
import traceback

from tqdm import tqdm

from mixprop.mixture import trial_seed
from mixprop.stages.experiments import TRIAL_FUNCTIONS, ExperimentConfig, Setting

logger = logging.getLogger(__name__)


def run_trial(setting: Setting, trial: int, config: ExperimentConfig) -> dict:
    seed = trial_seed(config.seed, trial)
    record = {"setting": setting.label, "trial": trial, "seed": seed, "ok": True, "error": None, "metrics": {}}
    try:
        record["metrics"] = TRIAL_FUNCTIONS[setting.kind](setting, seed, config)
    except Exception as exc:
        logger.error("trial %d of %s failed (seed %d): %s", trial, setting.label, seed, exc)
        logger.debug(traceback.format_exc())
        record.update(ok=False, error=f"{type(exc).__name__}: {exc}")
    return record


async def run(state: dict, **kwargs) -> dict:
    config: ExperimentConfig = state["config"]
    jobs = [(s, t) for s in state["preset"].settings for t in range(s.trials)]
    if not jobs:
        logger.info("No trials to run")
        return {**state, "records": []}

    # Semaphore is created here, on the running loop
    semaphore = asyncio.Semaphore(config.parallelism)
    bar = tqdm(total=len(jobs), desc=config.experiment, disable=not config.progress)

    async def run_limited(setting: Setting, trial: int) -> dict:
        async with semaphore:
            record = await asyncio.to_thread(run_trial, setting, trial, config)
        bar.update(1)
        return record

    try:
        records = await asyncio.gather(*(run_limited(s, t) for s, t in jobs))
    finally:
        bar.close()
    failed = sum(not r["ok"] for r in records)
    logger.info("✅ %d trials finished, %d failed", len(records), failed)
    return {**state, "records": list(records)}
