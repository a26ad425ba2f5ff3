import json

import numpy as np
import pytest
import yaml

from definetti import config as cfgmod
from definetti.cli import main
from definetti.reproduce import brownian_a_star, cl_a_star

BROWNIAN = {"model": {"sigma": 1.0, "drift": 1.0}, "q": 0.1,
            "grid": {"x_max": 10.0, "n": 1000}, "policy": "optimal",
            "mc": {"paths": 2000, "seed": 1, "x0": [1.0]}}
CL = {"model": {"drift": 3.0, "jumps": {"lam": 2.0, "density": {"family": "exponential", "mu": 1.0}}},
      "q": 0.1, "grid": {"x_max": 20.0, "n": 2000}, "policy": "optimal",
      "mc": {"paths": 2000, "seed": 2, "x0": [1.0]}}
AM = {"model": {"drift": 21.4, "jumps": {"lam": 10.0, "density": {"family": "gamma", "k": 2, "mu": 1.0}}},
      "q": 0.1, "grid": {"x_max": 30.0, "n": 4000}}


def _write(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data) if name.endswith(".yaml") else json.dumps(data))
    return str(p)


def _run(tmp_path, cmd, data, *extra, name="run.yaml"):
    out = tmp_path / "out"
    return main([cmd, "--config", _write(tmp_path, data, name), "--out", str(out), *extra]), out


def test_round_trip_yaml_and_json(tmp_path):
    for name, data in (("a.yaml", AM), ("b.json", BROWNIAN), ("c.yaml", {**CL, "policy": {"bands": [[0, 1], [2, 3]]}})):
        cfg = cfgmod.load(_write(tmp_path, data, name))
        cfgmod.dump(cfg, tmp_path / "echo.yaml")
        assert cfgmod.load(tmp_path / "echo.yaml") == cfg


@pytest.mark.parametrize("bad", [
    {**BROWNIAN, "extra": 1},
    {**BROWNIAN, "model": {"sigma": 1.0, "drift": 1.0, "eta": 2}},
    {**BROWNIAN, "q": -1.0},
    {**BROWNIAN, "model": {"sigma": 0.0, "drift": 1.0, "jumps": {"lam": 5.0, "density": {"family": "exponential", "mu": 1.0}}}},
    {**BROWNIAN, "policy": "sometimes"},
    {**BROWNIAN, "model": {"drift": 3.0, "jumps": {"lam": 2.0, "density": {"family": "gamma", "k": 1.5, "mu": 1.0}}}},
])
def test_schema_errors_exit_1(tmp_path, bad, capsys):
    rc, _ = _run(tmp_path, "scale", bad)
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["scale", "--out", str(tmp_path)]) == 1


def test_scale_brownian(tmp_path):
    rc, out = _run(tmp_path, "scale", BROWNIAN)
    assert rc == 0
    data = np.loadtxt(out / "scale.csv", delimiter=",", skiprows=1)
    assert np.all(data[:, 0] >= 0)
    x = data[:, 0]
    d = np.sqrt(1.2)
    exact = (np.exp((d - 1) * x) - np.exp(-(1 + d) * x)) / d
    np.testing.assert_allclose(data[:, 1], exact, rtol=1e-12, atol=1e-300)
    echo = cfgmod.load(out / "config.echo.yaml")
    assert echo == cfgmod.load(tmp_path / "run.yaml")


def test_scale_numeric_representation(tmp_path):
    rc, out = _run(tmp_path, "scale", {**BROWNIAN, "representation": "numeric"})
    assert rc == 0
    rep = json.loads((out / "scale_report.json").read_text())
    assert rep["kind"] == "NumericGrid" and max(rep["laplace_residuals"].values()) < 1e-6


def test_scale_am_rates(tmp_path, capsys):
    rc, out = _run(tmp_path, "scale", AM)
    assert rc == 0
    rates = json.loads((out / "scale_report.json").read_text())["rates"]
    np.testing.assert_allclose(rates, [0.0396, -0.0794, -1.4882], atol=1e-3)
    assert "rates:" in capsys.readouterr().out


def test_optimize(tmp_path, capsys):
    rc, out = _run(tmp_path, "optimize", BROWNIAN)
    assert rc == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["a_star"] == pytest.approx(brownian_a_star(1, 1, 0.1), abs=1e-6)
    assert cert["kind"] == "SufficientConditionHolds"
    rc, out = _run(tmp_path, "optimize", CL)
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["a_star"] == pytest.approx(cl_a_star(3, 2, 1, 0.1), abs=1e-6)
    assert cert["kind"] == "LogConvexDensity"
    capsys.readouterr()
    rc, out = _run(tmp_path, "optimize", AM)
    assert rc == 0
    text = capsys.readouterr().out
    assert "Violated" in text and "definetti hjb" in text


def test_hjb(tmp_path, capsys):
    rc, out = _run(tmp_path, "hjb", BROWNIAN)
    assert rc == 0
    bands = json.loads((out / "bands.json").read_text())["ladder"]
    assert len(bands) == 1
    assert bands[0][1] == pytest.approx(brownian_a_star(1, 1, 0.1), abs=0.02)
    rc, out = _run(tmp_path, "hjb", AM)
    assert rc == 0
    assert len(json.loads((out / "bands.json").read_text())["ladder"]) == 2


def test_hjb_q_zero_guard(tmp_path, capsys):
    rc, _ = _run(tmp_path, "hjb", {**BROWNIAN, "q": 0.0})
    assert rc == 1
    assert "allow_zero_q" in capsys.readouterr().err


def test_simulate_reproducible(tmp_path):
    rc, out = _run(tmp_path, "simulate", BROWNIAN)
    assert rc == 0
    first = (out / "estimates.json").read_bytes()
    rc, out = _run(tmp_path, "simulate", BROWNIAN)
    assert (out / "estimates.json").read_bytes() == first
    rec = json.loads(first)[0]
    from definetti import barrier_value, scale_brownian
    v = barrier_value(scale_brownian(1, 1, 0.1), brownian_a_star(1, 1, 0.1), 1.0)
    assert abs(rec["mean"] - v) <= 3 * rec["se"]
    rc, out = _run(tmp_path, "simulate", BROWNIAN, "--seed", "9")
    assert json.loads((out / "estimates.json").read_text())[0]["seed"] == 9


def test_simulate_exit(tmp_path):
    data = {"model": {"sigma": 1.0, "drift": 1.0}, "q": 0.0,
            "mc": {"paths": 4000, "seed": 4, "x0": [1.0], "exit": {"a": 2.0}}}
    rc, out = _run(tmp_path, "simulate", data, name="exit.json")
    assert rc == 0
    rec = json.loads((out / "estimates.json").read_text())[0]
    ratio = (1 - np.exp(-2.0)) / (1 - np.exp(-4.0))
    assert abs(rec["mean"] - ratio) <= 3 * rec["se"]


def test_simulate_needs_policy(tmp_path):
    rc, _ = _run(tmp_path, "simulate", {**BROWNIAN, "policy": None})
    assert rc == 1


def test_env_output_dir(tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv("DEFINETTI_OUT", str(target))
    assert main(["scale", "--config", _write(tmp_path, BROWNIAN)]) == 0
    assert (target / "scale.csv").exists()


def test_reproduce_subset(tmp_path, capsys):
    assert main(["reproduce-paper", "--only", "1", "3", "8", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum("PASS" in s for s in lines) == 3


def test_reproduce_exit_code_tracks_failures(tmp_path):
    rc = main(["reproduce-paper", "--only", "2", "8", "--out", str(tmp_path)])
    rows = json.loads((tmp_path / "reproduce.json").read_text())
    assert len(rows) == 2
    assert rc == (0 if all(r["passed"] for r in rows) else 3)
