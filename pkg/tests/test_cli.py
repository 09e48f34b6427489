import json
import subprocess
import sys
from pathlib import Path

import pytest

from fockdirichlet.cli import load_config, main, run_scenario


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "schema_version": 1,
        "experiment": "verify",
        "model": {
            "kind": "mean_field",
            "lattice": {"dims": 1, "extent": 1, "geometry": "chain",
                        "n_max": 3},
            "beta": 1.0,
        },
        "kernel": {"kappa": 0.0, "n": 1, "sigma": 0.0},
        "seed": 7,
        "output": {"json": "report.json"},
    }
    cfg.update(overrides)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_verify_scenario_passes(tmp_path):
    cfg = load_config(str(write_config(tmp_path)))
    status, report = run_scenario(cfg, out_dir=str(tmp_path / "out"))
    assert status == 0
    assert report["passed"]
    data = json.loads((tmp_path / "out" / "report.json").read_text())
    assert data["experiment"] == "verify"
    assert all(c["passed"] for c in data["checks"])
    # timestamp lives in the sidecar, not the report
    assert "timestamp" not in data
    assert (tmp_path / "out" / "report.json.meta.json").exists()


def test_schema_rejects_unknown_fields(tmp_path):
    p = write_config(tmp_path, name="bad.json")
    cfg = json.loads(p.read_text())
    cfg["unexpected"] = 1
    p.write_text(json.dumps(cfg))
    with pytest.raises(ValueError, match="unexpected"):
        load_config(str(p))


def test_schema_reports_field_path(tmp_path):
    p = write_config(tmp_path, name="bad2.json")
    cfg = json.loads(p.read_text())
    cfg["model"]["lattice"]["n_max"] = 0
    p.write_text(json.dumps(cfg))
    with pytest.raises(ValueError, match="n_max"):
        load_config(str(p))


def test_malformed_json_exit_code(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["--config", str(p), "--out", str(tmp_path)]) == 2


def test_budget_refusal(tmp_path):
    p = write_config(tmp_path, name="big.json")
    cfg = json.loads(p.read_text())
    cfg["model"]["lattice"] = {"dims": 1, "extent": 8, "geometry": "chain",
                               "n_max": 4}
    p.write_text(json.dumps(cfg))
    assert main(["--config", str(p), "--out", str(tmp_path),
                 "--budget-mb", "64"]) == 3


def test_nmax_override(tmp_path):
    cfg = load_config(str(write_config(tmp_path)))
    status, report = run_scenario(cfg, out_dir=str(tmp_path / "o"),
                                  nmax_override=2)
    assert status == 0
    assert report["truncation"]["n_max"] == 2


def test_scaling_scenario_csv(tmp_path):
    p = write_config(
        tmp_path, name="scal.json", experiment="scaling",
        params={"sizes": [3, 4, 5], "kind": "z_power", "test": "sum_adag",
                "model_params": {"n": 1, "m": 1, "half": True}},
        output={"json": "scal.json", "csv": "scal.csv"})
    del_cfg = json.loads(p.read_text())
    del del_cfg["model"]
    p.write_text(json.dumps(del_cfg))
    cfg = load_config(str(p))
    status, report = run_scenario(cfg, out_dir=str(tmp_path / "out"))
    assert status == 0
    lines = (tmp_path / "out" / "scal.csv").read_text().strip().splitlines()
    assert lines[0] == "size,energy,variance,ratio"
    assert len(lines) == 4


def test_determinism_byte_identical(tmp_path):
    p = write_config(tmp_path)
    for d in ("r1", "r2"):
        assert main(["--config", str(p), "--out", str(tmp_path / d),
                     "--seed", "99"]) == 0
    b1 = (tmp_path / "r1" / "report.json").read_bytes()
    b2 = (tmp_path / "r2" / "report.json").read_bytes()
    assert b1 == b2


def test_manifest_jobs(tmp_path):
    c1 = write_config(tmp_path, name="c1.json",
                      output={"json": "r1.json"})
    c2 = write_config(tmp_path, name="c2.json",
                      output={"json": "r2.json"})
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(["c1.json", "c2.json"]))
    assert main(["--manifest", str(manifest), "--out", str(tmp_path / "m"),
                 "--jobs", "2"]) == 0
    assert (tmp_path / "m" / "r1.json").exists()
    assert (tmp_path / "m" / "r2.json").exists()


def test_console_entry_point(tmp_path):
    p = write_config(tmp_path)
    proc = subprocess.run(
        [sys.executable, "-m", "fockdirichlet.cli", "--config", str(p),
         "--out", str(tmp_path / "cli_out")],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_assertion_failure_exit_code(tmp_path):
    # an exponent band the flat-ratio model cannot satisfy
    p = write_config(
        tmp_path, name="fail.json", experiment="scaling",
        params={"sizes": [3, 4, 5], "kind": "z_power", "test": "sum_adag",
                "model_params": {"n": 1, "m": 1, "half": True},
                "exponent_range": [0.5, 1.0]},
        output={"json": "fail.json"})
    cfg = json.loads(p.read_text())
    del cfg["model"]
    p.write_text(json.dumps(cfg))
    assert main(["--config", str(p), "--out", str(tmp_path / "f")]) == 1
    data = json.loads((tmp_path / "f" / "fail.json").read_text())
    assert data["passed"] is False


def test_budget_env_var(tmp_path, monkeypatch):
    p = write_config(tmp_path, name="env.json")
    cfg = json.loads(p.read_text())
    cfg["model"]["lattice"] = {"dims": 1, "extent": 8, "geometry": "chain",
                               "n_max": 4}
    p.write_text(json.dumps(cfg))
    monkeypatch.setenv("FOCKDIRICHLET_BUDGET_MB", "64")
    assert main(["--config", str(p), "--out", str(tmp_path)]) == 3


def test_remaining_experiments_smoke(tmp_path):
    scenarios = {
        "gap": {"model": {"kind": "mean_field",
                          "lattice": {"dims": 1, "extent": 1,
                                      "geometry": "chain", "n_max": 4}}},
        "heat": {"model": {"kind": "z_power",
                           "lattice": {"dims": 1, "extent": 2,
                                       "geometry": "chain", "n_max": 2}},
                 "params": {"t_grid": [0.3, 1.0]}},
        "decay": {"params": {"lengths": [12], "cross_check_length": None}},
        "lieb-robinson": {"params": {"chain_length": 4, "n_max": 2,
                                     "t_grid": [0.3, 0.8]}},
        "bogolubov": {"params": {"s": 0.1, "n_max_list": [4, 6]}},
    }
    for name, extra in scenarios.items():
        cfg = {"schema_version": 1, "experiment": name, "seed": 3,
               "output": {"json": f"{name}.json", "csv": f"{name}.csv"}}
        cfg.update(extra)
        p = tmp_path / f"{name}.cfg.json"
        p.write_text(json.dumps(cfg))
        status = main(["--config", str(p), "--out", str(tmp_path / "smoke")])
        assert status == 0, name
        data = json.loads((tmp_path / "smoke" / f"{name}.json").read_text())
        assert data["passed"], name
