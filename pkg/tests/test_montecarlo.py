import json
import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from definetti import (BandPolicy, BarrierPolicy, LevyModel, SimConfig, Tabulated,
                       barrier_value, estimate_dividends, estimate_exit, estimate_martingale,
                       estimate_tail, mean_x1, optimal_barrier, phi, scale_brownian,
                       scale_rational, simulate_paths)
from definetti._backend import available
from definetti.montecarlo import (AdmissibilityError, _check_trace, path_stream,
                                  supremum_dividends, terminal_values, write_estimate_json,
                                  write_tail_csv)


def test_deterministic_path():
    m = LevyModel(sigma=0.0, drift=2.0)
    x = terminal_values(SimConfig(m, 1.0, T=3.0, paths=3))
    np.testing.assert_array_equal(x, [7.0, 7.0, 7.0])


def test_initial_lump_and_reflection_exact():
    m = LevyModel(sigma=0.0, drift=1.0)
    est = estimate_dividends(SimConfig(m, 3.0, BarrierPolicy(1.0), q=0.1, T=2.0, paths=2))
    assert est.mean == pytest.approx(2.0 + (1 - math.exp(-0.2)) / 0.1, rel=1e-14)
    assert est.se == 0.0


def test_mean_increment(am):
    T = 2.0
    x = terminal_values(SimConfig(am, 10.0, T=T, paths=20_000, seed=5))
    d = x - 10.0
    se = d.std(ddof=1) / math.sqrt(d.size)
    assert abs(d.mean() - mean_x1(am) * T) <= 3 * se


@pytest.mark.parametrize("name", ["brownian", "cl", "am"])
def test_exponential_martingale(name, request):
    m = request.getfixturevalue(name)
    p = phi(m, 0.1)
    for j, th in enumerate((0.5 * p, p, p + 1.0)):
        est = estimate_martingale(SimConfig(m, 1.0, T=1.0, paths=20_000, seed=100 + j), th)
        assert abs(est.mean - 1.0) <= 3 * est.se


@pytest.mark.slow
def test_brownian_barrier_value(brownian):
    sf = scale_brownian(1.0, 1.0, 0.1)
    a = optimal_barrier(sf, 30.0)
    est = estimate_dividends(SimConfig(brownian, 1.0, BarrierPolicy(a), q=0.1,
                                       paths=100_000, seed=11))
    assert abs(est.mean - barrier_value(sf, a, 1.0)) <= 3 * est.se
    assert est.bias_bound < 0.1 * 0.01 + 1e-12


def test_am_band_strategy_beats_barrier(am):
    from definetti.reproduce import am_band_solution
    sol, ladder = am_band_solution(n=8000)
    sf = scale_rational(am, 0.1)
    a = optimal_barrier(sf, 30.0)
    band = estimate_dividends(SimConfig(am, 5.0, ladder, q=0.1, paths=20_000, seed=3))
    bar = estimate_dividends(SimConfig(am, 5.0, BarrierPolicy(a), q=0.1, paths=20_000, seed=4))
    assert band.mean - bar.mean > 3 * math.hypot(band.se, bar.se)
    v5 = float(np.interp(5.0, sol.x, sol.v))
    assert abs(band.mean - v5) <= 3 * band.se + 0.01


def test_exit_examples(brownian):
    est = estimate_exit(SimConfig(brownian, 2.0, q=0.1, paths=100), 2.0)
    assert est.mean == 1.0 and est.se == 0.0
    w = scale_brownian(1.0, 1.0, 0.0)
    est = estimate_exit(SimConfig(brownian, 1.0, q=0.0, paths=20_000, seed=8), 2.0)
    assert abs(est.mean - float(w(1.0) / w(2.0))) <= 3 * est.se
    est = estimate_exit(SimConfig(brownian, 0.5, q=1.5, paths=20_000, seed=9), 1.5, one_sided=True)
    assert abs(est.mean - math.exp(-phi(brownian, 1.5))) <= 3 * est.se
    with pytest.raises(ValueError):
        estimate_exit(SimConfig(brownian, 3.0, q=0.1, paths=10), 2.0)


def test_exit_cl_two_sided(cl):
    sf = scale_rational(cl, 0.2)
    est = estimate_exit(SimConfig(cl, 1.0, q=0.2, paths=20_000, seed=12), 3.0)
    assert abs(est.mean - float(sf(1.0) / sf(3.0))) <= 3 * est.se


def test_tail_examples(brownian):
    cfg = SimConfig(brownian, 2.0, BarrierPolicy(1.0), q=0.1, paths=2000, seed=1)
    with pytest.warns(RuntimeWarning):
        rows = estimate_tail(cfg, [0.0, 1e6])
    assert rows[0].p == 1.0
    assert rows[1].p == 0.0 and rows[1].ci_low == 0.0 and 0 < rows[1].ci_high < 0.01
    with pytest.raises(ValueError):
        estimate_tail(SimConfig(brownian, 2.0, paths=10, q=0.1), [1.0])


def test_reproducible(cl):
    cfg = SimConfig(cl, 1.0, BarrierPolicy(1.5), q=0.1, paths=500, seed=2024)
    assert estimate_dividends(cfg) == estimate_dividends(cfg)


def test_streams_independent_of_chunking(brownian):
    cfg = SimConfig(brownian, 1.0, BarrierPolicy(2.0), q=0.1, paths=40, seed=77)
    whole = list(simulate_paths(cfg))
    from dataclasses import replace
    part = replace(cfg, paths=20)
    chunks = list(simulate_paths(part, start=20)) + list(simulate_paths(part, start=0))
    assert sorted(chunks) == sorted(whole)


def test_path_stream_distinct():
    a = np.random.Generator(path_stream(1, 0)).random(4)
    b = np.random.Generator(path_stream(1, 1)).random(4)
    c = np.random.Generator(path_stream(2, 0)).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


def test_se_scaling(cl):
    ses = [estimate_dividends(SimConfig(cl, 1.0, BarrierPolicy(1.5), q=0.1, paths=n,
                                        seed=31)).se for n in (4000, 16000)]
    assert 0.8 * 2 <= ses[0] / ses[1] <= 1.2 * 2


@pytest.mark.parametrize("policy", [BarrierPolicy(1.0), BandPolicy(((0.0, 0.5), (2.0, 3.0)))])
@pytest.mark.parametrize("name", ["brownian", "am"])
def test_admissibility_debug(policy, name, request):
    m = request.getfixturevalue(name)
    est = estimate_dividends(SimConfig(m, 2.5, policy, q=0.1, paths=300, seed=6, debug=True))
    assert est.mean > 0


def test_admissibility_violation_detected():
    with pytest.raises(AdmissibilityError):
        _check_trace([("lump", 0.0, 2.0, 1.0, -1.0)], 1.0, 0)
    with pytest.raises(AdmissibilityError):
        _check_trace([("rate", 0.0, 5.0, 1.0, 1.0)], 1.0, 0)


def test_reflection_law_matches_supremum(cl):
    sf = scale_rational(cl, 0.1)
    a = optimal_barrier(sf, 30.0)
    cfg = SimConfig(cl, a, BarrierPolicy(a), q=0.1, paths=5000, seed=123)
    from definetti.montecarlo import _collect
    div = _collect(cfg)[0]
    ref = supremum_dividends(cl, a, 0.1, cfg.horizon, 5000, seed=321)
    assert ks_2samp(div, ref).pvalue > 0.01


def test_tabulated_rejected():
    grid = np.linspace(0, 20, 400)
    m = LevyModel.cramer_lundberg(3.0, 1.0, Tabulated.from_function(lambda y: np.exp(-y), grid))
    with pytest.raises(ValueError):
        SimConfig(m, 1.0)


def test_config_validation(brownian):
    with pytest.raises(ValueError):
        SimConfig(brownian, -1.0)
    with pytest.raises(ValueError):
        SimConfig(brownian, 1.0, dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(brownian, 1.0, q=0.0).horizon
    cfg = SimConfig(brownian, 1.0, q=0.1, target_se=0.01)
    assert cfg.bias_bound < 0.1 * 0.01 * (1 + 1e-9)


def test_backends_bitwise(brownian, am):
    b = available()
    if "compiled" not in b:
        pytest.skip("compiled core not built")
    for m, pol in ((brownian, BarrierPolicy(2.0)), (am, BandPolicy(((0.0, 0.0), (1.8, 10.2))))):
        cfg = SimConfig(m, 5.0, pol, q=0.1, paths=300, seed=17)
        r1 = list(simulate_paths(cfg, backend=b["compiled"]))
        r2 = list(simulate_paths(cfg, backend=b["python"]))
        assert r1 == r2


def test_outputs(tmp_path, brownian):
    cfg = SimConfig(brownian, 2.0, BarrierPolicy(1.0), q=0.1, paths=200, seed=1)
    est = estimate_dividends(cfg)
    write_estimate_json(est, tmp_path / "e.json", dt=cfg.step)
    rec = json.loads((tmp_path / "e.json").read_text())
    assert rec["seed"] == 1 and rec["paths"] == 200 and rec["mean"] == est.mean
    with pytest.warns(RuntimeWarning):
        rows = estimate_tail(cfg, [0.5, 50.0])
    write_tail_csv(rows, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "y,p,ci_low,ci_high,exceedances,paths"
