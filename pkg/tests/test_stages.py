import json
import math

import pandas as pd
import pytest

from mixprop.errors import ConfigError
from mixprop.graph import run_experiment
from mixprop.stages.configure import config_hash
from mixprop.stages.experiments import ExperimentConfig, Setting, build_preset
from mixprop.stages.summarize import summarize
from mixprop.stages.trials import run_trial


def test_summarize_three_values():
    out = summarize([1.0, 2.0, 3.0])
    assert out["value"] == pytest.approx(2.0)
    assert out["sd"] == pytest.approx(1.0)
    assert out["stderr"] == pytest.approx(1.0 / math.sqrt(3))
    assert out["trials"] == 3


def test_summarize_rejection_rate():
    out = summarize([0, 1, 1, 0])
    assert out["value"] == pytest.approx(0.5)
    assert out["stderr"] == pytest.approx(0.2887, abs=1e-4)


def test_summarize_single_value_and_empty():
    assert summarize([0.4]) == {"value": 0.4, "sd": 0.0, "stderr": 0.0, "trials": 1}
    with pytest.raises(ValueError, match="empty input"):
        summarize([])


def test_desk_and_full_presets():
    desk = build_preset(ExperimentConfig("table4"))
    full = build_preset(ExperimentConfig("table4", full=True))
    assert len(desk.settings) == 6
    assert len(full.settings) == 18
    assert {s.kind for s in desk.settings} == {"test-ci", "test-mci"}
    bias = build_preset(ExperimentConfig("bias8"))
    assert [s.label_extra for s in bias.settings] == ["sigma12_sq=0", "sigma12_sq=0.1", "sigma12_sq=0.2"]


def test_trials_override_applies_to_every_setting():
    preset = build_preset(ExperimentConfig("table3", trials=2))
    assert {s.trials for s in preset.settings} == {2}


@pytest.mark.parametrize(
    "kwargs",
    [
        {"experiment": "table99"},
        {"experiment": "custom"},
        {"experiment": "table1", "trials": 0},
        {"experiment": "table1", "level": 1.5},
    ],
)
def test_experiment_config_validation(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


def test_config_hash_ignores_scheduling_knobs():
    a = ExperimentConfig("table1", seed=3, parallelism=1, out="x")
    b = ExperimentConfig("table1", seed=3, parallelism=8, out="y", progress=False)
    c = ExperimentConfig("table1", seed=4)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_failed_trial_is_recorded_not_raised():
    setting = Setting("mpe-ci", 0, 0.8, 0.2)
    record = run_trial(setting, 0, ExperimentConfig("table1"))
    assert not record["ok"]
    assert record["error"].startswith("ValueError")


def _custom(tmp_path, parallelism):
    return ExperimentConfig("custom", seed=5, trials=3, parallelism=parallelism, out=str(tmp_path),
                            progress=False, kind="mpe-ci", n=(300,), priors=((0.8, 0.2),), sigma12=(0.0,))


def test_custom_experiment_end_to_end_is_schedule_independent(tmp_path):
    serial = run_experiment(_custom(tmp_path / "serial", 1))
    parallel = run_experiment(_custom(tmp_path / "parallel", 3))
    pd.testing.assert_frame_equal(serial.rows, parallel.rows)
    assert set(serial.rows["metric"]) == {"abs_err_theta", "abs_err_theta_prime"}
    assert (serial.rows["trials"] == 3).all()
    assert (serial.rows["value"] < 0.2).all()

    out = tmp_path / "serial"
    assert (out / "custom.csv").exists() and (out / "custom.trials.csv").exists()
    assert (out / "trials.db").exists()
    provenance = json.loads((out / "custom.json").read_text(encoding="utf-8"))
    assert provenance["config_hash"] == serial.rows["config_hash"].iloc[0]
    assert provenance["seed"] == 5
