import json
import subprocess
import sys

import pytest

from octoarm.cli import main
from octoarm.config import parse_scenario


def report(out):
    return json.loads((out / "report.json").read_text())


def test_mc_oracle_pass(tmp_path):
    assert main(["mc-oracle", "--out", str(tmp_path)]) == 0
    rep = report(tmp_path)
    assert rep["verdict"] == "pass" and rep["metrics"]["max_deviation"] <= 1e-4
    written = {p.name for p in tmp_path.iterdir()}
    assert set(rep["files"]) == written
    assert {"scenario.ini", "pursuit.csv", "pursuit.png", "report.json"} <= written


def test_scenario_echo_reloads(tmp_path):
    main(["mc-oracle", "--out", str(tmp_path), "--seed", "7"])
    sc = parse_scenario((tmp_path / "scenario.ini").read_text())
    assert sc["scenario"]["seed"] == 7 and sc.kind == "mc_oracle"
    assert report(tmp_path)["scenario_hash"] == sc.digest()


def test_verdict_fail_exit_code(tmp_path):
    assert main(["mc-oracle", "--out", str(tmp_path), "--override", "mc_oracle.dt=1e-2"]) == 2
    assert report(tmp_path)["verdict"] == "fail"


def test_error_exit_code(tmp_path, capsys):
    assert main(["reach", "--out", str(tmp_path), "--override", "control.gain=3"]) == 1
    assert "unknown key" in capsys.readouterr().err
    assert main(["reach", "--out", str(tmp_path / "x"), "--override", "dt=1e-4"]) == 1
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[cable]\nb = -1\n")
    assert main(["reach", "--config", str(cfg), "--out", str(tmp_path / "y")]) == 1


def test_rest_shape_command(tmp_path):
    assert main(["rest-shape", "--out", str(tmp_path)]) == 0
    rep = report(tmp_path)
    m = rep["metrics"]
    assert m["base_curvature_increases_with_top_base"] and m["tip_curvature_increases_with_top_tip"]
    assert m["curl_decreases_with_b"] and m["failed_cells"] == 0
    assert (tmp_path / "rest_shapes.csv").exists()
    assert set(rep["files"]) == {p.name for p in tmp_path.iterdir()}


def test_short_sense_run(tmp_path):
    code = main(["sense", "--out", str(tmp_path), "--override", "scenario.case=I",
                 "--override", "scenario.duration=0.02", "--override", "scenario.dt=1e-4",
                 "--override", "scenario.log_stride=20"])
    assert code in (0, 2)
    rep = report(tmp_path)
    assert {"trace.csv", "units.csv", "panel_energy.csv", "panel_polar.csv"} <= set(rep["files"])
    assert all(v is None or isinstance(v, float) for v in rep["metrics"].values())


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "octoarm.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()


@pytest.mark.parametrize("argv", [[], ["juggle"]])
def test_bad_command_line(argv):
    with pytest.raises(SystemExit):
        main(argv)
