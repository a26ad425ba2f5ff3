import json

import numpy as np
import pytest

from definetti import (BandPolicy, Exponential, LevyModel, barrier_value, bands_from_regions,
                       certify, extract_regions, log_convexity_certificate, optimal_barrier,
                       scale_brownian, scale_cl_exponential, scale_rational, solve_hjb,
                       verify_value)
from definetti import _backend
from definetti._backend import available
from definetti.hjb import (A1, A2, A3, LadderError, _Level, components, jump_weights, write_band_json,
                           write_solution_csv)


def _oracle(model, sf, x_max, n, **kw):
    sol = solve_hjb(model, sf.q, x_max, n=n, **kw)
    a = optimal_barrier(sf, x_max)
    return sol, a, np.max(np.abs(sol.v - barrier_value(sf, a, sol.x)))


@pytest.fixture(scope="module")
def brownian_sol():
    m = LevyModel.brownian(1.0, 1.0)
    return m, *_oracle(m, scale_brownian(1.0, 1.0, 0.1), 10.0, 4000)


@pytest.fixture(scope="module")
def am_sol():
    from definetti.reproduce import am_model
    m = am_model()
    return m, extract_regions(solve_hjb(m, 0.1, 30.0, n=8000))


def test_brownian_matches_barrier(brownian_sol):
    _, sol, a, err = brownian_sol
    assert err < 5e-4


def test_cl_matches_barrier(cl):
    _, _, err = _oracle(cl, scale_cl_exponential(3.0, 2.0, 1.0, 0.2), 10.0, 4000)
    assert err < 5e-4


def test_am_beats_best_barrier_away_from_zero(am_sol):
    m, sol = am_sol
    sf = scale_rational(m, 0.1)
    best = optimal_barrier(sf, 30.0)
    gap = np.interp(5.0, sol.x, sol.v) - barrier_value(sf, best, 5.0)
    assert gap > 1e-3


def test_obstacle_and_monotonicity(brownian_sol, am_sol):
    for sol, tol in ((brownian_sol[1], 1e-9), (am_sol[1], 1e-9)):
        slope = np.diff(sol.v) / sol.h
        assert slope.min() >= 1 - 10 * tol
        assert np.all(np.diff(sol.v) > 0)


def test_brownian_regions(brownian_sol):
    _, sol, a, _ = brownian_sol
    extract_regions(sol)
    comps = components(sol.labels, A2)
    assert len(comps) == 1
    i, j = comps[0]
    assert i == 0 and abs(sol.x[j] - a) <= sol.h * 1.0001
    assert np.all(sol.labels[j + 1:] == A1)
    pol = bands_from_regions(sol)
    assert len(pol.bands) == 1 and abs(pol.bands[0][1] - a) <= sol.h


def test_am_two_continuation_components(am_sol):
    _, sol = am_sol
    comps = [c for c in components(sol.labels, A2) if c[0] < sol.x.size - 1]
    assert len(comps) == 2
    (i0, j0), (i1, j1) = comps
    window = sol.labels[j0 + 1:i1]
    assert window.size > 0 and not np.any(window == A2)
    # the surplus in the window is paid down to a_1, so these nodes carry the slope-one label
    assert np.all(window == A1)


def test_am_ladder_reported(am_sol):
    _, sol = am_sol
    pol = bands_from_regions(sol)
    assert len(pol.bands) == 2
    (b1, a1), (b2, a2) = pol.bands
    # below b2 everything is paid out at once; reflection happens on [b2, a2]
    assert b1 == 0.0 and a1 == 0.0
    assert a1 < b2 <= a2
    assert 1.7 < b2 < 1.9 and 10.0 < a2 < 10.5


def test_large_q_pays_everywhere():
    m = LevyModel.brownian(1.0, 1.0)
    sol = extract_regions(solve_hjb(m, 10.0, 5.0, n=1000))
    share = np.mean(sol.labels == A1)
    assert share > 0.98
    assert np.all(sol.labels[sol.x > 0.1] == A1)


def test_perturbed_am_exponential_single_band():
    m = LevyModel.cramer_lundberg(21.4, 10.0, Exponential(0.5))
    assert log_convexity_certificate(m.density, np.linspace(0.01, 30, 500))
    sf = scale_rational(m, 0.1)
    a = optimal_barrier(sf, 40.0)
    assert certify(m, sf, a, 40.0)
    sol = extract_regions(solve_hjb(m, 0.1, 40.0, n=4000))
    pol = bands_from_regions(sol)
    assert len(pol.bands) == 1
    assert abs(pol.bands[0][1] - a) < 0.05


def test_ladder_rejects_bad_labels(brownian_sol):
    _, sol, _, _ = brownian_sol
    extract_regions(sol)
    bad = sol.labels.copy()
    bad[:5] = A3
    import dataclasses
    broken = dataclasses.replace(sol, labels=bad)
    with pytest.raises(LadderError) as err:
        bands_from_regions(broken)
    assert err.value.components


def test_verify_brownian(brownian_sol):
    m, sol, _, _ = brownian_sol
    rep = verify_value(sol, m, 0.1)
    assert rep["generator_sup"] < 1e-3 and rep["slope_sup"] < 1e-3
    assert rep["upper_bound_ok"] and rep["lower_bound_ok"]
    assert rep["excess_nondecreasing"] and rep["excess_bounded"]


def test_verify_cl(cl):
    sol = solve_hjb(cl, 0.2, 10.0, n=4000)
    rep = verify_value(sol, cl, 0.2)
    # upwind drift differencing leaves an O(h) mismatch with the spline derivative
    assert rep["generator_sup"] < 2e-3
    assert rep["upper_bound_ok"] and rep["lower_bound_ok"] and rep["excess_nondecreasing"]


def test_verify_am():
    from definetti.reproduce import am_model
    m = am_model()
    sol = solve_hjb(m, 0.1, 30.0, n=16000)
    rep = verify_value(sol, m, 0.1)
    assert rep["generator_sup"] < 1e-3 and rep["slope_sup"] < 1e-3
    assert rep["excluded_near_edges"] > 0
    assert rep["upper_bound_ok"] and rep["lower_bound_ok"]
    assert rep["excess_nondecreasing"] and rep["excess_bounded"]


def _sweeps(model, q, x_max, n):
    lev = _Level(model, q, x_max, n, "upwind" if model.sigma == 0 else "central",
                 _backend.kernels)
    forced = np.zeros(n + 1, bool)
    forced[-1] = True
    pay, values = forced.copy(), []
    for _ in range(200):
        v = lev.evaluate(pay)
        values.append(v)
        new, _, _ = lev.improve(v, forced)
        if np.array_equal(new, pay):
            return values
        pay = new
    raise AssertionError("no convergence")


@pytest.mark.parametrize("which", ["brownian", "am"])
def test_policy_iteration_values_increase(which, brownian, am):
    m = brownian if which == "brownian" else am
    values = _sweeps(m, 0.1, 30.0, 250)
    assert len(values) > 2
    for a, b in zip(values, values[1:]):
        assert np.all(b >= a - 1e-12 * np.abs(a).max())


@pytest.mark.parametrize("which", ["brownian", "cl", "am"])
def test_policy_iteration_residuals_decrease(which, brownian, cl, am):
    m, q = {"brownian": (brownian, 0.1), "cl": (cl, 0.2), "am": (am, 0.1)}[which]
    sol = solve_hjb(m, q, 30.0, n=8000)
    pos = 0
    for _, sweeps in sol.iterations:
        level = sol.history[pos:pos + sweeps]
        pos += sweeps
        assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(level, level[1:]))
    assert sol.history[-1] < 1e-9


@pytest.mark.parametrize("which", ["brownian", "cl"])
def test_clamped_solver_reproduces_barrier(which, brownian, am):
    if which == "brownian":
        m, sf = brownian, scale_brownian(1.0, 1.0, 0.1)
    else:
        sf = scale_rational(am, 0.1)
        m = am
    a = optimal_barrier(sf, 30.0)
    sol = solve_hjb(m, 0.1, 30.0, n=8000, cap=a)
    err = np.max(np.abs(sol.v - barrier_value(sf, a, sol.x)))
    assert err < 5e-3
    assert np.all(sol.pay[sol.x > a + sol.h])


@pytest.mark.parametrize("which", ["brownian", "cl"])
def test_grid_refinement(which, brownian, cl):
    if which == "brownian":
        m, sf = brownian, scale_brownian(1.0, 1.0, 0.1)
    else:
        m, sf = cl, scale_cl_exponential(3.0, 2.0, 1.0, 0.2)
    errs = [_oracle(m, sf, 10.0, n)[2] for n in (500, 1000, 2000)]
    assert errs[0] / errs[1] >= 1.5 and errs[1] / errs[2] >= 1.5


def test_q_zero_warns(brownian):
    with pytest.warns(RuntimeWarning):
        try:
            solve_hjb(brownian, 0.0, 5.0, n=200)
        except Exception:
            pass


def test_backends_agree(am):
    b = available()
    if "compiled" not in b:
        pytest.skip("compiled core not built")
    s1 = solve_hjb(am, 0.1, 30.0, n=1024, backend=b["compiled"])
    s2 = solve_hjb(am, 0.1, 30.0, n=1024, backend=b["python"])
    np.testing.assert_array_equal(s1.pay, s2.pay)
    np.testing.assert_allclose(s1.v, s2.v, rtol=1e-11)


def test_jump_weights_mass(am):
    n, h = 3000, 0.01
    w, e = jump_weights(am, n, h)
    # weights integrate the density on [0, n h]
    assert w.sum() == pytest.approx(float(am.density.cdf(n * h)) - 0.0, abs=5e-3)
    assert np.all(w >= -1e-12) and np.all(e >= -1e-12)


def test_outputs(tmp_path, brownian_sol):
    _, sol, _, _ = brownian_sol
    extract_regions(sol)
    pol = bands_from_regions(sol)
    write_solution_csv(sol, tmp_path / "s.csv")
    head = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert head == "x,v,residual_L,residual_slope,region"
    write_band_json(sol, pol, tmp_path / "b.json")
    rec = json.loads((tmp_path / "b.json").read_text())
    assert rec["ladder"][0][0] == 0.0 and rec["iterations"]
    assert isinstance(pol, BandPolicy)
