"""
ConfigureStage
==============
Expand an ExperimentConfig into its table settings and stamp provenance.
"""

from __future__ import annotations

import hashlib
import json
import logging

from mixprop import __version__
from mixprop.stages.experiments import ExperimentConfig, build_preset

logger = logging.getLogger(__name__)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.provenance_dict(), sort_keys=True, default=list)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def run(state: dict, **kwargs) -> dict:
    config: ExperimentConfig = state["config"]
    preset = build_preset(config)
    digest = config_hash(config)
    logger.info("⚙️  %s: %d settings, %d trials total (config %s)", config.experiment,
                len(preset.settings), sum(s.trials for s in preset.settings), digest)
    return {**state, "preset": preset, "config_hash": digest, "version": f"mixprop {__version__}"}
