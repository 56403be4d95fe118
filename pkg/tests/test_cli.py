import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from flexatt.cli import main
from flexatt.plant import AxisDisturbance, DisturbanceModel, InertiaParameterization, PlantState, SpacecraftParams, Tone
from flexatt.scenario import example_inertia, example_scenario


def _write_scenario(path, scen):
    path.write_text(scen.to_json())
    return str(path)


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _single_error_line(err, reason):
    lines = [ln for ln in err.splitlines() if ln.startswith("flexatt: ")]
    assert len(lines) == 1, err
    assert lines[0].startswith(f"flexatt: {reason}")
    return lines[0]


def test_design_example(tmp_path, capsys):
    path = _write_scenario(tmp_path / "s.json", example_scenario())
    code, out, _ = _run(capsys, ["design", "--scenario", path])
    assert code == 0
    doc = json.loads(out)
    E0 = np.array(doc["E0"])
    np.testing.assert_allclose(E0[0, :2], [2, 2], atol=1e-8)
    np.testing.assert_allclose(E0[1, 2:4], [2.36, 2], atol=1e-8)
    np.testing.assert_allclose(E0[2, 4:], [3, 2], atol=1e-8)
    np.testing.assert_allclose(np.array(doc["E_blocks"][0])[2, 4:], [-1, 0], atol=1e-8)


def test_design_duplicate_frequency(tmp_path, capsys):
    doc = json.loads(example_scenario().to_json())
    doc["disturbance"][1]["tones"].append({"amplitude": 1.0, "frequency": 0.8, "phase": 0.0})
    path = tmp_path / "dup.json"
    path.write_text(json.dumps(doc))
    code, _, err = _run(capsys, ["design", "--scenario", str(path)])
    assert code == 1
    assert "axis 2" in _single_error_line(err, "synthesis-error")


def _rigid(t_final=5.0):
    sc = example_scenario(t_final=t_final)
    J = example_inertia(20.0)
    return replace(sc, spacecraft=SpacecraftParams(J, np.zeros((3, 0)), np.zeros((0, 0)), np.zeros((0, 0))),
                   inertia=InertiaParameterization.from_inertia(J, ()),
                   initial=PlantState(sc.initial.q, np.zeros(3), np.zeros(0), np.zeros(0)),
                   design=type(sc.design)(), events=())


def test_design_rigid_minimal(tmp_path, capsys):
    code, out, _ = _run(capsys, ["design", "--scenario", _write_scenario(tmp_path / "r.json", _rigid())])
    assert code == 0
    doc = json.loads(out)
    assert doc["E_blocks"] == [] and doc["unknown"] == []


def test_simulate_t_final_zero(tmp_path, capsys):
    path = _write_scenario(tmp_path / "s.json", example_scenario(t_final=0.0))
    code, _, _ = _run(capsys, ["simulate", "--scenario", path, "--out", str(tmp_path / "o")])
    assert code == 0
    lines = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 2


def test_simulate_byte_identical(tmp_path, capsys):
    path = _write_scenario(tmp_path / "s.json", example_scenario(t_final=20.0))
    assert _run(capsys, ["design", "--scenario", path, "--out", str(tmp_path / "d.json")])[0] == 0
    outs = []
    for name in ("a", "b"):
        code, _, _ = _run(capsys, ["--seedless", "simulate", "--scenario", path, "--design", str(tmp_path / "d.json"),
                                   "--out", str(tmp_path / name)])
        assert code == 0
        outs.append(((tmp_path / name / "trajectory.csv").read_bytes(),
                     json.loads((tmp_path / name / "manifest.json").read_text())))
    assert outs[0][0] == outs[1][0]
    assert outs[0][1]["outputs"] == outs[1][1]["outputs"]
    assert outs[0][1]["input_hash"] == outs[1][1]["input_hash"]
    assert b"\r" not in outs[0][0]


def test_simulate_missing_design(tmp_path, capsys):
    path = _write_scenario(tmp_path / "s.json", example_scenario(t_final=1.0))
    code, _, err = _run(capsys, ["simulate", "--scenario", path, "--design", str(tmp_path / "nope.json"),
                                 "--out", str(tmp_path / "o")])
    assert code == 2
    _single_error_line(err, "usage-error")


def test_simulate_divergence(tmp_path, capsys):
    sc = replace(example_scenario(t_final=50.0), dt=0.5, gains=replace(example_scenario().gains, k2=1e4))
    path = _write_scenario(tmp_path / "s.json", sc)
    code, _, err = _run(capsys, ["simulate", "--scenario", path, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "t=" in _single_error_line(err, "integration-diverged")


def test_usage_errors(tmp_path, capsys):
    for argv in ([], ["bogus"], ["simulate"], ["check", "gains"], ["simulate", "--scenario", "x", "--out", "o",
                                                                  "--dt", "-1"]):
        code, _, err = _run(capsys, argv)
        assert code == 2, argv
        _single_error_line(err, "usage-error")


def test_schema_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = _run(capsys, ["design", "--scenario", str(bad)])
    assert code == 2
    _single_error_line(err, "schema-error")
    bad.write_text(json.dumps({"schema_version": 1, "kind": "scenario"}))
    code, _, err = _run(capsys, ["design", "--scenario", str(bad)])
    assert code == 2
    _single_error_line(err, "schema-error")


def test_check_pe_constant_signal(tmp_path, capsys):
    t = np.arange(0, 20, 0.01)
    f = tmp_path / "sig.csv"
    f.write_text("t,g\n" + "".join(f"{float(a)!r},2.0\n" for a in t))
    code, out, _ = _run(capsys, ["check", "pe", "--trajectory", str(f), "--columns", "g", "--T0", "1",
                                 "--theta", "2"])
    assert code == 0 and "PE: yes" in out
    f.write_text("t,g\n" + "".join(f"{float(a)!r},{float(np.exp(-a))!r}\n" for a in t))
    code, _, err = _run(capsys, ["check", "pe", "--trajectory", str(f), "--columns", "g", "--T0", "1"])
    assert code == 2
    _single_error_line(err, "verdict-negative")


def test_check_truncated_csv(tmp_path, capsys):
    sc = example_scenario(t_final=3.0, decimate=100)
    path = _write_scenario(tmp_path / "s.json", sc)
    _run(capsys, ["simulate", "--scenario", path, "--out", str(tmp_path / "o")])
    csv = (tmp_path / "o" / "trajectory.csv").read_text()
    trunc = tmp_path / "trunc.csv"
    trunc.write_text(csv[: len(csv) // 2])
    code, _, err = _run(capsys, ["check", "convergence", "--scenario", path, "--trajectory", str(trunc)])
    assert code == 2
    _single_error_line(err, "schema-error")


def test_check_gains(tmp_path, capsys):
    from flexatt.scenario import certified_scenario
    code, out, err = _run(capsys, ["check", "gains", "--scenario", _write_scenario(tmp_path / "e.json",
                                                                                  example_scenario())])
    assert code == 2 and "NOT SATISFIED" in out
    _single_error_line(err, "verdict-negative")
    code, out, _ = _run(capsys, ["check", "gains", "--scenario", _write_scenario(tmp_path / "c.json",
                                                                                certified_scenario()),
                                 "--out", str(tmp_path / "g.json")])
    assert code == 0
    assert json.loads((tmp_path / "g.json").read_text())["satisfied"] is True


def test_check_convergence_on_example_run(tmp_path, capsys, example_run):
    path = _write_scenario(tmp_path / "s.json", example_scenario())
    traj = tmp_path / "traj.csv"
    traj.write_text(example_run.to_csv())
    code, out, _ = _run(capsys, ["check", "convergence", "--scenario", path, "--trajectory", str(traj),
                                 "--out", str(tmp_path / "c.json")])
    assert code == 0
    assert "sqrt estimate of sigma1" in out and "NOT converged" in out.splitlines()[1]
    rep = json.loads((tmp_path / "c.json").read_text())
    assert rep["frequencies"][0]["converged"] and not rep["components"][0]["converged"]


def test_check_lyapunov_on_certified_run(tmp_path, capsys, certified):
    scen, _, traj = certified
    path = _write_scenario(tmp_path / "s.json", scen)
    f = tmp_path / "traj.csv"
    f.write_text(traj.to_csv())
    code, out, _ = _run(capsys, ["check", "lyapunov", "--scenario", path, "--trajectory", str(f)])
    assert code == 0
    assert out.count("-> monotone") == 2


def test_reproduce_refuses_non_empty_dir(tmp_path, capsys):
    (tmp_path / "keep.txt").write_text("x")
    code, _, err = _run(capsys, ["reproduce-example", "--out", str(tmp_path)])
    assert code == 2
    assert "--force" in _single_error_line(err, "usage-error")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "flexatt"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.count("\n") == 1 and proc.stderr.startswith("flexatt: usage-error")
