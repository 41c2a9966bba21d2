"""Command-line interface: artifacts, exit codes, determinism."""

import csv
import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from pulsegate import cli, controls, model, optimizer
from pulsegate.model import TWO_PI

import oracles


X_GATE_DOC = {
    "system": {"levels": 2, "essential": 2, "freq_ghz": 4.0,
               "self_kerr_ghz": 0.0},
    "controls": {"splines_per_carrier": 6, "carriers_ghz": [0.0],
                 "alpha_max_mhz": 20.0},
    "gate": {"name": "swap0d"},
    "sim": {"t_ns": 30.0, "m": 300},
    "optimizer": {"max_iters": 150, "seed": 20, "restarts": 1,
                  "infidelity_target": 1e-4},
}


def write_config(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture(scope="module")
def optimized(tmp_path_factory):
    """One optimize run shared by the artifact-consuming tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "run.yaml", X_GATE_DOC)
    out = root / "out"
    res = CliRunner().invoke(cli.main, [
        "optimize", cfg, "--out-dir", str(out), "--deterministic"])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "report.json").read_text())
    return cfg, out, report


def test_optimize_artifacts_and_report(optimized):
    cfg, out, report = optimized
    for name in ("report.json", "params.json", "controls.csv",
                 "populations.csv", "convergence.csv",
                 "convergence_r1.csv"):
        assert (out / name).exists(), name
    assert report["artifact_schema"] == 1
    assert report["deterministic"] is True
    assert report["wall_time_s"] is None
    assert report["status"] == "target_reached"
    assert report["j1"] <= 1e-4
    assert report["best_restart"] == 1
    assert report["m"] == 300
    assert report["d"] == 12
    assert report["config"]["system"]["levels"] == [2]
    assert report["config"]["optimizer"]["seed"] == 20

    header, rows = read_csv(out / "convergence.csv")
    assert header == ["iter", "j1", "j2", "total", "pg_norm", "step",
                      "obj_evals", "grad_evals"]
    assert int(rows[0][0]) == 0
    assert len(rows) == report["iterations"] + 1
    assert abs(float(rows[-1][1]) - report["j1"]) < 1e-12


def test_deterministic_rerun_is_byte_identical(optimized, tmp_path):
    cfg, out, _ = optimized
    out2 = tmp_path / "again"
    res = CliRunner().invoke(cli.main, [
        "optimize", cfg, "--out-dir", str(out2), "--deterministic"])
    assert res.exit_code == 0, res.output
    for name in ("report.json", "params.json", "convergence.csv",
                 "controls.csv", "populations.csv"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes(), name


def test_simulate_reproduces_optimized_objective(optimized, tmp_path):
    cfg, out, report = optimized
    sim_out = tmp_path / "sim"
    res = CliRunner().invoke(cli.main, [
        "simulate", cfg, "--params", str(out / "params.json"),
        "--out-dir", str(sim_out), "--deterministic"])
    assert res.exit_code == 0, res.output
    sim_report = json.loads((sim_out / "report.json").read_text())
    assert sim_report["status"] == "simulated"
    assert abs(sim_report["j1"] - report["j1"]) < 1e-10
    assert abs(sim_report["j2"] - report["j2"]) < 1e-12


def test_populations_csv_is_normalized(optimized):
    _, out, report = optimized
    header, rows = read_csv(out / "populations.csv")
    n, e = 2, 2
    assert header[0] == "t_ns"
    assert header[1:] == [f"pop_c{c + 1}_l{l}" for c in range(e)
                          for l in range(n)]
    assert len(rows) == report["m"] + 1
    assert float(rows[0][0]) == 0.0
    assert abs(float(rows[-1][0]) - 30.0) < 1e-12
    for row in rows[:: len(rows) // 7]:
        vals = np.asarray([float(x) for x in row[1:]]).reshape(e, n)
        assert np.abs(vals.sum(axis=1) - 1.0).max() < 1e-3


def test_controls_csv_schema(optimized):
    _, out, _ = optimized
    header, rows = read_csv(out / "controls.csv")
    assert header == ["t_ns", "p_s1c1", "q_s1c1", "re_d_s1", "im_d_s1",
                      "f_s1"]
    assert len(rows) == 301
    bound = np.sqrt(2.0) * 1 * TWO_PI * 20.0e-3
    for row in rows[::60]:
        re_d, im_d = float(row[3]), float(row[4])
        assert np.hypot(re_d, im_d) <= bound + 1e-12


def test_spectrum_matches_dft_oracle(optimized, tmp_path):
    cfg, out, _ = optimized
    spec_out = tmp_path / "spec"
    res = CliRunner().invoke(cli.main, [
        "spectrum", cfg, "--params", str(out / "params.json"),
        "--out-dir", str(spec_out)])
    assert res.exit_code == 0, res.output
    header, rows = read_csv(spec_out / "spectrum.csv")
    assert header == ["freq_ghz", "magnitude"]

    param, alpha = controls.load_parameters(str(out / "params.json"))
    steps, t_ns = 300, 30.0
    h = t_ns / steps
    times = np.arange(steps + 1) * h
    sig = controls.lab_frame_control(param, alpha, 0, times,
                                     model.ghz(4.0))
    npad = 1024
    assert len(rows) == npad // 2 + 1
    padded = np.zeros(npad)
    padded[: sig.size] = sig
    ref = np.abs(oracles.dft_onesided(padded))
    got = np.asarray([float(r[1]) for r in rows])
    assert np.abs(got - ref).max() < 1e-9 * max(1.0, ref.max())
    freqs = np.asarray([float(r[0]) for r in rows])
    assert abs(freqs[1] - 1.0 / (npad * h)) < 1e-15
    assert abs(freqs[np.argmax(got)]) == pytest.approx(4.0, abs=0.05)


def test_resonances_command(tmp_path):
    doc = {
        "system": {"levels": 4, "essential": 3, "freq_ghz": 4.2,
                   "self_kerr_ghz": 0.21},
        "controls": {"splines_per_carrier": 6, "auto_resonant": True,
                     "alpha_max_mhz": 8.0},
        "gate": {"name": "swap0d"},
        "sim": {"t_ns": 40.0, "m": 200},
    }
    cfg = write_config(tmp_path / "run.yaml", doc)
    res = CliRunner().invoke(cli.main, [
        "resonances", cfg, "--out-dir", str(tmp_path)])
    assert res.exit_code == 0, res.output
    table = json.loads((tmp_path / "resonances.json").read_text())
    assert list(table) == ["subsystem_1"]
    assert np.allclose(table["subsystem_1"], [0.0, -0.21, -0.42])
    assert json.loads(res.output) == table


def test_gradcheck_pass_and_fail(optimized):
    cfg, _, _ = optimized
    runner = CliRunner()
    res = runner.invoke(cli.main, [
        "gradcheck", cfg, "--steps", "120", "--components", "5"])
    assert res.exit_code == 0, res.output
    assert "max relative error" in res.output

    res_bad = runner.invoke(cli.main, [
        "gradcheck", cfg, "--steps", "120", "--components", "5",
        "--tol", "1e-16"])
    assert res_bad.exit_code == 4
    assert "failing indices" in res_bad.output


def test_config_error_exits_2(tmp_path):
    doc = dict(X_GATE_DOC, controls=dict(X_GATE_DOC["controls"],
                                         typo_key=1.0))
    cfg = write_config(tmp_path / "bad.yaml", doc)
    res = CliRunner().invoke(cli.main, ["optimize", cfg])
    assert res.exit_code == 2
    assert "config error" in res.output


def test_params_layout_mismatch_exits_2(optimized, tmp_path):
    cfg, out, _ = optimized
    other = controls.ControlParameterization(
        horizon=30.0, splines_per_carrier=5, carriers=((0.0,),))
    path = tmp_path / "other.json"
    controls.save_parameters(str(path), other, np.zeros(other.size))
    res = CliRunner().invoke(cli.main, [
        "simulate", cfg, "--params", str(path), "--out-dir",
        str(tmp_path / "o")])
    assert res.exit_code == 2


def test_stalled_optimizer_exits_3(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "run.yaml", X_GATE_DOC)

    def fake_minimize(evaluate, x0, lower, upper, config=None, pinned=(),
                      callback=None):
        value, grad, report = evaluate(x0, True)
        return optimizer.OptimizerResult(
            x=np.asarray(x0, dtype=float), value=value, report=report,
            status="stalled", iterations=0, history=[], obj_evals=1,
            grad_evals=1)

    monkeypatch.setattr(cli, "minimize", fake_minimize)
    res = CliRunner().invoke(cli.main, [
        "optimize", cfg, "--out-dir", str(tmp_path / "out"),
        "--deterministic"])
    assert res.exit_code == 3


def test_risk_sweep(optimized, tmp_path):
    cfg, out, report = optimized
    doc = dict(X_GATE_DOC)
    doc["risk"] = {"enabled": True, "eps_max_mhz": 10.0, "quad_order": 3}
    risk_cfg = write_config(tmp_path / "risk.yaml", doc)
    res = CliRunner().invoke(cli.main, [
        "risk-sweep", risk_cfg, str(out / "params.json"),
        "--eps-min-mhz", "-10", "--eps-max-mhz", "10",
        "--eps-count", "5", "--out-dir", str(tmp_path)])
    assert res.exit_code == 0, res.output
    header, rows = read_csv(tmp_path / "risk_sweep.csv")
    assert header == ["params", "eps_mhz", "j1", "j2"]
    assert len(rows) == 5
    assert all(r[0] == "params" for r in rows)
    eps = [float(r[1]) for r in rows]
    assert eps == [-10.0, -5.0, 0.0, 5.0, 10.0]
    mid = [r for r in rows if float(r[1]) == 0.0][0]
    assert abs(float(mid[2]) - report["j1"]) < 1e-10
    assert max(float(r[2]) for r in rows) > float(mid[2])


def test_risk_sweep_needs_risk_section(optimized, tmp_path):
    cfg, out, _ = optimized
    res = CliRunner().invoke(cli.main, [
        "risk-sweep", cfg, str(out / "params.json"),
        "--out-dir", str(tmp_path)])
    assert res.exit_code == 2


def test_version_flag():
    res = CliRunner().invoke(cli.main, ["--version"])
    assert res.exit_code == 0
