import hashlib
import json
import os
import subprocess
import sys

import pytest

from muprocess.cli import ExperimentConfig, build_config, main, read_config_file
from muprocess.paths import ParameterError


def run_cli(args, tmp_path, name):
    out = tmp_path / name
    return main(args + ["--out", str(out)]), out


def test_missing_mu_exits_nonzero(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "muprocess.cli", "rk2-law"],
        capture_output=True, text=True)
    assert proc.returncode != 0
    assert "--mu" in proc.stderr


def test_unknown_command_exits_nonzero():
    with pytest.raises(SystemExit):
        build_config(["frobnicate"])


def test_config_file_merging(tmp_path):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text("mu = 2.0\nn = 5  # comment\ndt_ladder = 1e-2,1e-3\n")
    cfg = build_config(["rk2-law", "--config", str(cfg_file), "--mu", "0.5"])
    assert cfg.mu == 0.5          # flag overrides file
    assert cfg.n == 5
    assert cfg.dt_ladder == (1e-2, 1e-3)


def test_config_file_rejects_garbage(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("this is not a key value line\n")
    with pytest.raises(ParameterError):
        read_config_file(str(cfg_file))


def test_unknown_config_key_exits_2(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("nonsense_key = 3\n")
    code = main(["rk2-law", "--mu", "1.0", "--config", str(cfg_file),
                 "--out", str(tmp_path / "o")])
    assert code == 2


def test_bad_dt_exits_2(tmp_path):
    code, _ = run_cli(["simulate", "--mu", "1.0", "--dt", "-1.0"],
                      tmp_path, "o")
    assert code == 2


def test_simulate_writes_reproducible_csv(tmp_path):
    args = ["simulate", "--mu", "2.0", "--steps", "500", "--seed", "3"]
    code1, out1 = run_cli(list(args), tmp_path, "run1")
    code2, out2 = run_cli(list(args), tmp_path, "run2")
    assert code1 == 0 and code2 == 0
    b1 = (out1 / "path.csv").read_bytes()
    b2 = (out2 / "path.csv").read_bytes()
    assert b1 == b2
    header = b1.split(b"\n", 1)[0].decode()
    assert header == "t,btilde,smax,x,inf_run"


def test_manifest_hashes_match_files(tmp_path):
    code, out = run_cli(["simulate", "--mu", "1.0", "--steps", "100"],
                        tmp_path, "run")
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["mu"] == 1.0
    for entry in manifest["files"]:
        digest = hashlib.sha256((out / entry["name"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]


def test_rk2_law_report_and_exit_code(tmp_path):
    code, out = run_cli(
        ["rk2-law", "--mu", "1.0", "--b", "-0.5", "--h", "0.25",
         "--n", "80", "--dt", "1e-3", "--seed", "0"], tmp_path, "run")
    report = json.loads((out / "report-ray-knight-second-law.json").read_text())
    assert report["name"] == "ray-knight-second-law"
    assert code == (0 if report["pass"] else 1)


def test_sde2_writes_residual_table(tmp_path):
    code, out = run_cli(
        ["sde2", "--mu", "1.0", "--b", "-0.4", "--h-max", "0.3",
         "--n", "20", "--dt-ladder", "1e-2,2e-3"], tmp_path, "run")
    table = (out / "residuals-second.csv").read_text().strip().splitlines()
    assert table[0] == "dt,median_sup_residual"
    assert len(table) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    names = {f["name"] for f in manifest["files"]}
    assert "residuals-second.csv" in names


def test_default_config_values():
    cfg = ExperimentConfig(command="simulate")
    assert cfg.cap_time is None
    assert cfg.resolved_dx() == pytest.approx(4.0 * cfg.dt ** 0.5)
