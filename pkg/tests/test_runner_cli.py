import json
import os

import pytest

from conewalk import cli, runner
from conewalk.config import parse_config

DP_CFG = """experiment = dp_exact
model = ex1:family:1
x = 2,0
n_max = 50
mode = exact
seed = 1
"""

HL_CFG = """experiment = halfline
law = pm1
seed = 1
"""


def _run(text, tmp_path, sub, workers=1):
    out = tmp_path / sub
    cfg = parse_config(text)
    rc = runner.run(cfg, workers=workers, out_dir=str(out))
    return rc, out


# ---------------------------------------------------------------------------
# runner contract
# ---------------------------------------------------------------------------

def test_dp_exact_run_constant_En(tmp_path):
    rc, out = _run(DP_CFG, tmp_path, "dp")
    assert rc == 0
    lines = (out / "lattice.csv").read_text().splitlines()
    assert lines[0] == "n,survival,E_n,ratio_2n,pruned_mass"
    for line in lines[1:]:
        assert line.split(",")[2] == "8"  # exact martingale value


def test_halfline_negative_control(tmp_path):
    rc_ok, _ = _run(HL_CFG, tmp_path, "ok")
    assert rc_ok == 0
    rc_bad, out = _run(HL_CFG + "R = 0\n", tmp_path, "bad")
    assert rc_bad != 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["assertions"]["drift_inequality"] is False
    # partial outputs are retained even on failure
    assert (out / "drift.csv").exists()


def test_byte_identical_reruns(tmp_path):
    _, out1 = _run(DP_CFG, tmp_path, "a")
    _, out2 = _run(DP_CFG, tmp_path, "b")
    assert (out1 / "lattice.csv").read_bytes() == (out2 / "lattice.csv").read_bytes()


def test_mc_run_deterministic_across_workers(tmp_path):
    text = """experiment = survival
cone = orthant:2
model = gauss:2
x = 2,2
n_list = 5,20
reps = 20000
seed = 3
"""
    _, out1 = _run(text, tmp_path, "w1", workers=1)
    _, out2 = _run(text, tmp_path, "w4", workers=4)
    assert (out1 / "survival.csv").read_bytes() == (out2 / "survival.csv").read_bytes()


def test_manifest_contract(tmp_path):
    rc, out = _run(DP_CFG, tmp_path, "m")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "dp_exact"
    assert manifest["version"]
    assert manifest["wall_time_s"] >= 0
    assert manifest["config"]["model"] == "ex1:family:1"
    assert "lattice.csv" in manifest["outputs"]
    # stable key order: serialization sorts keys
    text = (out / "manifest.json").read_text()
    assert text == json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def test_config_echo_present(tmp_path):
    _, out = _run(DP_CFG, tmp_path, "e")
    echo = (out / "config.txt").read_text()
    assert "experiment = dp_exact" in echo
    assert "model = ex1:family:1" in echo


def test_runtime_error_yields_partial_outputs(tmp_path):
    # dp_exact on a gaussian model parses but cannot run
    text = """experiment = dp_exact
model = gauss:2
x = 2,0
n_max = 10
seed = 1
"""
    rc, out = _run(text, tmp_path, "err")
    assert rc == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["error"]


def test_float_serialization_17_digits(tmp_path):
    text = """experiment = survival
cone = orthant:2
model = gauss:2
x = 1,1
n_list = 3
reps = 8192
seed = 2
"""
    _, out = _run(text, tmp_path, "fmt")
    row = (out / "survival.csv").read_text().splitlines()[1].split(",")
    est = float(row[1])
    assert row[1] == format(est, ".17g")  # round-trips exactly


# ---------------------------------------------------------------------------
# service + CLI
# ---------------------------------------------------------------------------

def test_service_health():
    with cli._client(None) as client:
        r = client.get("/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_service_rejects_bad_config():
    with cli._client(None) as client:
        r = client.post("/run", json={"config_text": "experiment = survival\n",
                                      "workers": 1})
    body = r.json()
    assert body["exit_status"] == 2
    assert any("seed required" in e for e in body["errors"])


def test_cli_end_to_end(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(DP_CFG)
    out = tmp_path / "out"
    rc = cli.main(["--config", str(cfg), "--out", str(out)])
    assert rc == 0
    assert (out / "lattice.csv").exists()
    assert (out / "manifest.json").exists()
    assert (out / "config.txt").exists()


def test_cli_exit_status_mirrors_assertions(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(HL_CFG + "R = 0\n")
    rc = cli.main(["--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 1


def test_env_overrides(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(DP_CFG)
    monkeypatch.setenv("CONEWALK_N_MAX", "5")
    out = tmp_path / "env"
    rc = cli.main(["--config", str(cfg), "--out", str(out)])
    assert rc == 0
    lines = (out / "lattice.csv").read_text().splitlines()
    assert len(lines) == 6  # header + 5 rows


def test_env_override_appends_new_key(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(DP_CFG.replace("mode = exact\n", ""))
    monkeypatch.setenv("CONEWALK_MODE", "float")
    out = tmp_path / "append"
    rc = cli.main(["--config", str(cfg), "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["mode"] == "float"
