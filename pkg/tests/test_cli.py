import json
import runpy
import sys

import numpy as np
import pandas as pd
import pytest

from mixprop import cli
from mixprop.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main


@pytest.fixture
def stem(tmp_path):
    path = tmp_path / "demo"
    code = main(["gen", "--n", "300", "--nprime", "300", "--theta", "0.8", "--theta-prime", "0.2",
                 "--seed", "1", "--out", str(path)])
    assert code == EXIT_OK
    return path


def _paths(stem):
    return str(stem) + ".u.csv", str(stem) + ".uprime.csv"


def test_gen_writes_both_blocks(stem):
    u, v = _paths(stem)
    with open(u, encoding="utf-8") as f:
        assert f.readline().strip() == "x1,x2,y"
    with open(v, encoding="utf-8") as f:
        assert sum(1 for _ in f) == 301


def test_mpe_single_range(stem, tmp_path):
    u, v = _paths(stem)
    report = tmp_path / "mpe.json"
    code = main(["mpe", "ci", "--u", u, "--uprime", v, "--roles", "x1=0;x2=1", "--range", "1,50",
                 "--report", str(report)])
    assert code == EXIT_OK
    payload = json.loads(report.read_text(encoding="utf-8"))
    assert 1.0 <= payload["alpha_hat"] <= 50.0
    assert payload["method"] == "ci"


def test_mpe_class_priors(stem, tmp_path):
    u, v = _paths(stem)
    report = tmp_path / "priors.json"
    code = main(["mpe", "ci", "--u", u, "--uprime", v, "--roles", "x1=0;x2=1", "--range", "1,50",
                 "--range-minus", "-50,0", "--report", str(report)])
    assert code == EXIT_OK
    payload = json.loads(report.read_text(encoding="utf-8"))
    assert 0.0 <= payload["theta_prime"] < payload["theta"] <= 1.0


def test_known_test_report(stem, tmp_path):
    u, v = _paths(stem)
    report = tmp_path / "test.json"
    code = main(["test", "ci", "--u", u, "--uprime", v, "--roles", "x1=0;x2=1", "--alpha", "1.3333",
                 "--report", str(report)])
    assert code == EXIT_OK
    payload = json.loads(report.read_text(encoding="utf-8"))
    assert payload["mode"] == "CI-known"
    assert 0.0 <= payload["p_value"] <= 1.0


def test_config_file_feeds_kernel_settings(stem, tmp_path):
    u, v = _paths(stem)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sigma=1.5\nlevel=0.1\n", encoding="utf-8")
    report = tmp_path / "test.json"
    code = main(["test", "ci", "--u", u, "--uprime", v, "--roles", "x1=0;x2=1", "--alpha", "1.3333",
                 "--config", str(cfg), "--report", str(report)])
    assert code == EXIT_OK
    assert json.loads(report.read_text(encoding="utf-8"))["level"] == pytest.approx(0.1)


def test_bad_roles_exit_with_config_code(stem, tmp_path):
    u, v = _paths(stem)
    code = main(["mpe", "ci", "--u", u, "--uprime", v, "--roles", "x1=0;x2=0", "--range", "1,50",
                 "--report", str(tmp_path / "r.json")])
    assert code == EXIT_CONFIG


def test_malformed_csv_exit_with_config_code(tmp_path):
    bad = tmp_path / "bad.u.csv"
    bad.write_text("x1,x2\n1,oops\n", encoding="utf-8")
    code = main(["test", "ci", "--u", str(bad), "--uprime", str(bad), "--roles", "x1=0;x2=1",
                 "--alpha", "1.2", "--report", str(tmp_path / "r.json")])
    assert code == EXIT_CONFIG


def test_missing_uprime_only_allowed_for_screening(stem, tmp_path):
    u, _ = _paths(stem)
    code = main(["test", "ci", "--u", u, "--roles", "x1=0;x2=1", "--alpha", "0.5",
                 "--report", str(tmp_path / "r.json")])
    assert code == EXIT_CONFIG
    code = main(["test", "ci", "--u", u, "--roles", "x1=0;x2=1", "--alpha", "1",
                 "--report", str(tmp_path / "screen.json")])
    assert code == EXIT_OK


def test_linalg_failure_exits_with_numerical_code(stem, tmp_path, monkeypatch):
    def singular(*args, **kwargs):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr(cli, "estimate_alpha", singular)
    u, v = _paths(stem)
    code = main(["mpe", "mci", "--u", u, "--uprime", v, "--roles", "x1=0;x2=1", "--range", "1.1,1.5",
                 "--report", str(tmp_path / "r.json")])
    assert code == EXIT_NUMERICAL


def test_screen_mci_writes_triplet_table(rng, tmp_path):
    m = 120
    y = np.where(np.arange(m) < m // 2, 1, -1)
    z = rng.normal(size=(m, 3))
    frame = pd.DataFrame({
        "s": z[:, 0],
        "a": z[:, 0] + 0.5 * z[:, 1] + 3.0 * (y == 1),
        "b": z[:, 0] + 0.5 * z[:, 2] + 3.0 * (y == 1),
        "y": y,
    })
    labeled = tmp_path / "labeled.csv"
    frame.to_csv(labeled, index=False)
    report = tmp_path / "triplets.csv"
    code = main(["screen", "--labeled", str(labeled), "--mci", "--report", str(report)])
    assert code == EXIT_OK
    table = pd.read_csv(report)
    assert list(table.columns[:3]) == ["feature_1", "feature_2", "feature_s"]
    assert table[["feature_1", "feature_2", "feature_s"]].values.tolist() == [["a", "b", "s"]]


def test_module_entry_point_runs_commands(tmp_path, monkeypatch):
    stem = tmp_path / "entry"
    monkeypatch.setattr(sys, "argv", ["mixprop", "gen", "--n", "20", "--nprime", "20", "--theta", "0.8",
                                      "--theta-prime", "0.2", "--seed", "2", "--out", str(stem)])
    with pytest.raises(SystemExit) as info:
        runpy.run_module("mixprop", run_name="__main__")
    assert info.value.code == EXIT_OK
    assert (tmp_path / "entry.u.csv").exists()
