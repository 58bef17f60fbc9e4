"""
mixprop/graph.py  ·  LangGraph 0.4 API
--------------------------------------
Wires the experiment stages into a linear pipeline:

configure → trials → summarize → report
"""

from __future__ import annotations

import asyncio
import logging

from langgraph.graph import StateGraph

from mixprop.stages import configure, report, summarize, trials
from mixprop.stages.experiments import ExperimentConfig
from mixprop.stages.summarize import ResultsTable

logger = logging.getLogger(__name__)

# ── 1. build graph ────────────────────────────────────────────────────────
g = StateGraph(dict)

g.add_node("configure", configure.run)
g.add_node("trials", trials.run)
g.add_node("summarize", summarize.run)
g.add_node("report", report.run)

g.add_edge("configure", "trials")
g.add_edge("trials", "summarize")
g.add_edge("summarize", "report")

g.set_entry_point("configure")
g.set_finish_point("report")

graph = g.compile()


# ── 2. entry-point helpers ────────────────────────────────────────────────
async def run_experiment_async(config: ExperimentConfig) -> ResultsTable:
    """Async variant for callers already inside an event loop."""
    logger.info("🚀  starting experiment %s (seed %d)", config.experiment, config.seed)
    state = await graph.ainvoke({"config": config})
    logger.info("✅  experiment %s finished", config.experiment)
    return state["results"]


def run_experiment(config: ExperimentConfig) -> ResultsTable:
    """Run one experiment end to end and return its results table."""
    return asyncio.run(run_experiment_async(config))
