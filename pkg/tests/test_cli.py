import json
import re
import subprocess
import sys

import pytest

from fairsim.cli import main, parse_cell_filter
from fairsim.config import ConfigError, parse_config

CONFIG = """\
[fairsim]
scenarios = threshold_binary
alphas = 0.2, 0.8
algorithms = logistic, knn
replicates = 3
n_train = 200
knn_max_L = 10
master_seed = 11
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(CONFIG)
    return path


def test_config_parsing():
    cfg = parse_config(CONFIG)
    assert cfg.plan.alphas == (0.2, 0.8) and cfg.plan.n_test == 20
    assert parse_config(CONFIG).with_overrides(preset="desk").plan.n_train == 200
    assert parse_config("[fairsim]\n").with_overrides(preset="desk").plan.n_train == 1000
    for bad in ("[fairsim]\nbogus = 1\n", "[other]\n", "[fairsim]\nreplicates = many\n",
                "[fairsim]\nalgorithms = cart\n", "no section"):
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_cell_filter_parsing():
    flt, reps = parse_cell_filter(["scenario=threshold_binary,alpha=0.2", "replicate=0+3"])
    assert flt == {"scenario": "threshold_binary", "alpha": "0.2"} and reps == [0, 3]
    with pytest.raises(ConfigError):
        parse_cell_filter(["colour=red"])
    with pytest.raises(ConfigError):
        parse_cell_filter(["bias_index=x"])
    assert parse_cell_filter(["view=full", "view=full"])[0] == {"view": "full"}


def test_generate_is_byte_identical(config, tmp_path):
    assert main(["generate", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
    assert main(["generate", "--config", str(config), "--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "dataset.json" in names and "train_full_biased.csv" in names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_malformed_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[fairsim]\nunknown_key = 3\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert main(["generate", "--config", str(tmp_path / "missing.ini"),
                 "--out", str(tmp_path)]) == 2
    assert main(["generate"]) == 2  # no output directory


def test_run_analyze_plot(config, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config), "--out", str(out),
                 "--cell", "bias_index=0", "--cell", "bias_index=4"]) == 2
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    again = tmp_path / "again"
    assert main(["run", "--config", str(config), "--out", str(again)]) == 0
    for name in ("results.csv", "diagnostics.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 5 * 2 * 2 * 3

    assert main(["analyze", str(out / "results.csv")]) == 0
    for name in ("summary.csv", "coefficients.csv", "knn_L.csv", "ellipses.json"):
        assert (out / name).exists()
    assert main(["plot", str(out), "--out", str(out / "fig")]) == 0
    svg = (out / "fig" / "scatter_threshold_binary_logistic.svg").read_text()
    panels = re.findall(r"<g class='panel'.*?</g>", svg, flags=re.S)
    assert len(panels) == 2 * 5
    assert all("class='identity'" in p for p in panels)
    assert all("class='ellipse'" in p for p in panels)
    for name in ("pvalues_threshold_binary_logistic.svg", "coefficients_threshold_binary_logistic.svg",
                 "knn_L_threshold_binary.svg", "scatter_threshold_binary_knn.svg"):
        assert (out / "fig" / name).exists()


def test_run_single_cell(config, tmp_path):
    out = tmp_path / "one"
    code = main(["run", "--config", str(config), "--out", str(out), "--cell",
                 "alpha=0.2,bias_index=3,algorithm=logistic,view=anon,replicate=1"])
    assert code == 0
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 2 and ",anon,1," in rows[1]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["replicates"] == [1]
    assert main(["run", "--config", str(config), "--out", str(out), "--cell", "alpha=0.5"]) == 2
    assert main(["run", "--config", str(config), "--out", str(out), "--cell", "replicate=9"]) == 2


def test_analyze_empty_and_bad(tmp_path):
    (tmp_path / "results.csv").write_text(
        "scenario,alpha,bias_level,rejection_prob,algorithm,view,replicate,"
        "acc_perfect,acc_biased,hyperparam,converged\n")
    assert main(["analyze", str(tmp_path / "results.csv")]) == 0
    assert (tmp_path / "summary.csv").read_text().count("\n") == 1
    (tmp_path / "bad.csv").write_text("scenario,alpha\n")
    assert main(["analyze", str(tmp_path / "bad.csv")]) == 2
    assert main(["analyze", str(tmp_path / "nope.csv")]) == 2


def test_plot_missing_columns(tmp_path):
    assert main(["plot", str(tmp_path)]) == 2
    (tmp_path / "ellipses.json").write_text(json.dumps({"cells": [{"scenario": "x"}]}))
    assert main(["plot", str(tmp_path)]) == 2
    (tmp_path / "ellipses.json").write_text(json.dumps({"cells": []}))
    (tmp_path / "knn_L.csv").write_text("scenario,L\n")
    assert main(["plot", str(tmp_path)]) == 2


def test_calibrate_tiny(config, tmp_path, capsys):
    assert main(["calibrate", "knn", "--config", str(config), "--out", str(tmp_path),
                 "--datasets", "1"]) == 0
    summary = json.loads((tmp_path / "calibration_knn.json").read_text())
    assert summary["n"] == 2 * 2
    assert 1 <= summary["L"]["min"] <= summary["L"]["max"]
    assert main(["calibrate", "svm-kernel", "--config", str(config), "--out", str(tmp_path),
                 "--datasets", "1"]) == 0
    svm = json.loads((tmp_path / "calibration_svm_kernel.json").read_text())
    assert sum(svm["wins"].values()) == 4
    assert main(["calibrate", "knn", "--config", str(config), "--out", str(tmp_path),
                 "--datasets", "0"]) == 2


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "fairsim.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("generate", "calibrate", "run", "analyze", "plot"):
        assert cmd in res.stdout
