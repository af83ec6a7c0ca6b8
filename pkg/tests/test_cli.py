import csv
import json
import subprocess
import sys

import pytest

from lipolysis.cli import main

BASE = ["--K", "1", "--L", "1"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_reaches_equilibrium(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    code, _, _ = run(["simulate", *BASE, "--V", "1", "--kappa", "1", "--t-end", "20", "--out", str(out)], capsys)
    assert code == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["t", "s", "q", "p", "f", "residual_mass", "residual_acyl"]
    assert float(rows[-1]["p"]) == pytest.approx(1, abs=1e-4)
    assert float(rows[-1]["f"]) == pytest.approx(2, abs=1e-4)
    meta = json.loads((tmp_path / "sim.csv.meta.json").read_text())
    assert meta["config"]["params"]["kappa"] == 1.0


def test_simulate_reduced_model(capsys):
    code, out, _ = run(["simulate", *BASE, "--V", "10", "--model", "qssa1-V", "--t-end", "2", "--points", "3"], capsys)
    assert code == 0
    assert len(out.strip().splitlines()) == 4


def test_missing_params_exit_2(capsys):
    code, _, err = run(["simulate", "--K", "1"], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "config"


def test_invalid_value_exit_2(capsys):
    code, _, err = run(["simulate", *BASE, "--V", "-1"], capsys)
    assert code == 2


def test_unknown_flag_exit_2(capsys):
    code, _, err = run(["simulate", "--bogus"], capsys)
    assert code == 2
    assert "error" in json.loads(err)


def test_numeric_failure_exit_3(capsys):
    code, _, err = run(["timescales", *BASE, "--V", "1", "--kappa", "1", "--t-end", "0.01"], capsys)
    assert code == 3
    assert json.loads(err)["error"] == "numeric"


def test_dimensional_file(tmp_path, capsys):
    dim = tmp_path / "dim.json"
    dim.write_text(json.dumps({"v1_max": 1, "k1_m": 2, "v2_max": 10, "k2_m": 1, "sigma": 1.6, "s0": 2}))
    code, out, _ = run(["simulate", "--dimensional-file", str(dim), "--dump-config"], capsys)
    assert code == 0
    cfg = json.loads(out)
    assert cfg["params"] == {"K": 1.0, "L": 2.0, "V": 10.0, "kappa": 0.16, "q0": 0.0}
    code, _, _ = run(["simulate", "--dimensional-file", str(dim), "--V", "2"], capsys)
    assert code == 2


def test_dump_config_round_trip(tmp_path, capsys):
    args = ["simulate", *BASE, "--V", "2", "--kappa", "3", "--t-end", "5", "--points", "11"]
    cfg_path = tmp_path / "cfg.json"
    assert run(args + ["--dump-config", "--out", str(cfg_path)], capsys)[0] == 0
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(["simulate", "--config", str(cfg_path), "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.meta.json").read_bytes() == (tmp_path / "b.csv.meta.json").read_bytes()


def test_flags_override_config(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    run(["simulate", *BASE, "--V", "2", "--dump-config", "--out", str(cfg_path)], capsys)
    code, out, _ = run(["simulate", "--config", str(cfg_path), "--V", "5", "--dump-config"], capsys)
    assert json.loads(out)["params"]["V"] == 5.0


def test_qssa_certified_grid(capsys):
    code, out, _ = run(["qssa", "--K", "1", "--L", "1", "--V", "4", "--kappa", "0", "--points", "20"], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert len(rows) == 20
    assert all(r["q_le_half"] == "1" for r in rows)


def test_timescales_condition(capsys):
    code, out, _ = run(["timescales", *BASE, "--V", "10", "--kappa", "16", "--format", "json"], capsys)
    assert code == 0
    report = json.loads(out)["report"]
    assert report["condition_full"] is True
    assert report["q_tilde_m"] == pytest.approx(0.0263, abs=1e-3)


def test_asymptotics(capsys):
    code, out, _ = run(["asymptotics", *BASE, "--V", "3", "--kappa", "1", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["columns"][-1] == "q_order3"
    err = doc["meta"]["sup_error"]
    assert err["1"] > err["2"] > err["3"]


def test_sensitivity_command(capsys):
    code, out, _ = run(["sensitivity", *BASE, "--V", "2", "--kappa", "16", "--points", "21", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert "fd_dp_dk" in doc["columns"]
    assert doc["meta"]["sign_discrepancy"]["duration"] > 0


def test_sweep_single_cell(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    args = ["sweep", *BASE, "--n-v", "1", "--n-kappa", "1",
            "--log10-v", "0,0", "--log10-kappa", "1,1", "--out", str(out), "--gnuplot"]
    code, _, _ = run(args, capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "log10_V,log10_kappa,value,status"
    assert len(lines) == 2
    assert (tmp_path / "sweep.gp").exists()


def test_sweep_deterministic(tmp_path, capsys):
    args = ["sweep", *BASE, "--V", "1", "--n-v", "3", "--n-kappa", "2", "--kappa-zero",
            "--metrics", "t_s_pct,rel_change_p", "--threads", "1"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(args + ["--out", str(b)], capsys)[0] == 0
    for tag in ("t_s_pct_50", "rel_change_p_50"):
        assert (tmp_path / f"a.{tag}.csv").read_bytes() == (tmp_path / f"b.{tag}.csv").read_bytes()


def test_sweep_partial_failure_exit_4(tmp_path, capsys):
    # max_steps has no flag; it comes in through a config file.
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"integrator": {"max_steps": 2}}))
    args = ["sweep", *BASE, "--n-v", "1", "--n-kappa", "1", "--format", "json", "--config", str(cfg_path)]
    code, _, err = run(args, capsys)
    assert code == 4
    assert json.loads(err)["error"] == "partial_sweep"


def test_sweep_staged(capsys):
    code, out, _ = run(["sweep", *BASE, "--V", "1", "--staged", "--n-v", "2", "--thresholds", "10,90"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "species,percent,log10_V,value,status"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lipolysis.cli", "timescales", *BASE, "--V", "2", "--kappa", "16"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "condition_full,false" in proc.stdout


def test_dimensional_round_trip(tmp_path, capsys):
    dim = tmp_path / "dim.json"
    dim.write_text(json.dumps({"v1_max": 1, "k1_m": 2, "v2_max": 10, "k2_m": 1, "sigma": 1.6, "s0": 2}))
    cfg_path = tmp_path / "cfg.json"
    assert run(["simulate", "--dimensional-file", str(dim), "--dump-config", "--out", str(cfg_path)], capsys)[0] == 0
    code, out, _ = run(["simulate", "--config", str(cfg_path), "--dump-config"], capsys)
    assert code == 0
    assert out == cfg_path.read_text()
