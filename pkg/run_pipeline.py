import json
import logging
import os
import sys
import traceback

from mixprop.config import env_int, load_env
from mixprop.graph import run_experiment
from mixprop.stages.experiments import ExperimentConfig

DESK_EXPERIMENTS = ("table1", "table3", "table4", "table5", "bias8", "bias9", "power10")

log_file = "output.log"

load_env()
logging.basicConfig(
    level=os.getenv("LOGLEVEL", "INFO").upper(),
    format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
    handlers=[
        logging.FileHandler(log_file, mode="w", encoding="utf-8"),
        logging.StreamHandler(sys.stdout),
    ],
    force=True,
)
logger = logging.getLogger(__name__)


def main():
    seed = env_int("MIXPROP_SEED", 0)
    parallelism = env_int("MIXPROP_PARALLELISM", 1)
    logger.info("Running desk presets for %d experiments...", len(DESK_EXPERIMENTS))
    summary = {}
    try:
        for experiment in DESK_EXPERIMENTS:
            config = ExperimentConfig(experiment=experiment, seed=seed, parallelism=parallelism)
            results = run_experiment(config)
            summary[experiment] = {
                "provenance": results.provenance,
                "rows": results.rows.to_dict(orient="records"),
            }
        logger.info("All experiments completed!")

        with open("final_state.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, default=str)
        logger.info("Saved final summary to final_state.json")
        logger.info(f"Log output written to {os.path.abspath(log_file)}")
        return summary
    except Exception as e:
        logger.error("Pipeline failed: %s", e)
        logger.error(traceback.format_exc())
        raise


if __name__ == "__main__":
    main()
