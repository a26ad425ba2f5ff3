"""End-to-end checks of the three worked examples and the acceptance table.

Each ``criterion_*`` function returns a :class:`Result`; :func:`run` executes
a selection and :func:`format_table` renders one line per criterion.
"""
from __future__ import annotations

import math
import time
import warnings
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _backend
from .dividend import (BarrierPolicy, barrier_curve, barrier_value, hjb_residual,
                       optimal_barrier, sufficient_condition, tail_asymptote)
from .hjb import bands_from_regions, extract_regions, solve_hjb
from .levy import (Exponential, GammaShape, LevyModel, Tabulated, laplace_exponent,
                   log_convexity_certificate, phi)
from .montecarlo import SimConfig, _collect, estimate_dividends, estimate_exit, estimate_martingale
from .scale import (cl_exponential_roots, laplace_identity_residual, scale_brownian,
                    scale_cl_exponential, scale_numeric, scale_rational)

AM_ROOTS = (0.0396, -0.0794, -1.4882)
AM_BANDS = (1.83, 10.45)


class Result(NamedTuple):
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float


def am_model() -> LevyModel:
    return LevyModel.cramer_lundberg(21.4, 10.0, GammaShape(2, 1.0))


def brownian_model() -> LevyModel:
    return LevyModel.brownian(1.0, 1.0)


def cl_model() -> LevyModel:
    return LevyModel.cramer_lundberg(3.0, 2.0, Exponential(1.0))


def hyperexponential(points: int = 1000, y_max: float = 40.0) -> Tabulated:
    grid = np.linspace(0.0, y_max, points)
    return Tabulated.from_function(lambda y: 0.5 * np.exp(-y) + np.exp(-2.0 * y), grid)


def brownian_a_star(sigma, c, q):
    s2 = sigma * sigma
    delta = math.sqrt(c * c + 2 * q * s2) / s2
    omega = c / s2
    return math.log((delta + omega) / (delta - omega)) / delta


def cl_a_star(c, lam, mu, q):
    qp, qm = cl_exponential_roots(c, lam, mu, q)
    val = math.log(qm ** 2 * (mu + qm) / (qp ** 2 * (mu + qp))) / (qp - qm)
    return max(val, 0.0)


def _timed(number, title, budget):
    def wrap(fn):
        def inner(*args, **kw):
            t0 = time.perf_counter()
            ok, detail = fn(*args, **kw)
            return Result(number, title, bool(ok), detail, time.perf_counter() - t0, budget)
        inner.number = number
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


@_timed(1, "AM roots of psi = q", 1.0)
def criterion_am_roots():
    sf = scale_rational(am_model(), 0.1)
    err = np.max(np.abs(np.sort(sf.rates) - np.sort(AM_ROOTS)))
    return err <= 1e-3, f"roots {np.array2string(sf.rates, precision=6)}, max dev {err:.2e}"


def am_band_solution(n=8000, x_max=30.0):
    sol = extract_regions(solve_hjb(am_model(), 0.1, x_max, n=n))
    return sol, bands_from_regions(sol)


@_timed(2, "AM band ladder", 120.0)
def criterion_am_bands(n=8000):
    sol, pol = am_band_solution(n)
    sf = scale_rational(am_model(), 0.1)
    a_star = optimal_barrier(sf, 30.0)
    best0 = barrier_value(sf, a_star, 0.0)
    a1 = pol.bands[0][1]
    b2 = pol.bands[1][0] if len(pol.bands) > 1 else math.nan
    ok_ladder = abs(a1 - AM_BANDS[0]) <= 0.05 and abs(b2 - AM_BANDS[1]) <= 0.05
    ok_dom = sol.v[0] > best0
    ladder = ", ".join(f"({b:.4f}, {a:.4f})" for b, a in pol.bands)
    detail = (f"ladder {ladder}; a1={a1:.4f} b2={b2:.4f} vs {AM_BANDS}; "
              f"v(0)={sol.v[0]:.9f} vs best barrier {best0:.9f}")
    return ok_ladder and ok_dom, detail


BROWNIAN_SETS = ((1.0, 1.0, 0.1), (0.5, 2.0, 0.05), (2.0, 1.0, 0.3))
CL_SETS = ((3.0, 2.0, 1.0, 0.1), (5.0, 3.0, 1.0, 0.05), (2.5, 1.0, 0.5, 0.2))


@_timed(3, "closed-form optimal barriers", 1.0)
def criterion_closed_barriers():
    errs = []
    for s, c, q in BROWNIAN_SETS:
        errs.append(abs(optimal_barrier(scale_brownian(s, c, q), 40.0) - brownian_a_star(s, c, q)))
    for c, lam, mu, q in CL_SETS:
        errs.append(abs(optimal_barrier(scale_cl_exponential(c, lam, mu, q), 40.0)
                        - cl_a_star(c, lam, mu, q)))
    return max(errs) <= 1e-6, f"max |a* - closed form| = {max(errs):.2e} over {len(errs)} sets"


def _paper_models():
    return (("brownian", brownian_model(), 0.1), ("cl-exponential", cl_model(), 0.1),
            ("azcue-muler", am_model(), 0.1))


@_timed(4, "Laplace identity, all backends", 10.0)
def criterion_laplace_identity():
    worst = 0.0
    parts = []
    x = np.linspace(0.0, 40.0, 4001)
    for name, model, q in _paper_models():
        reps = {"mixture": scale_rational(model, q),
                "grid": scale_numeric(model, q, x)}
        pq = phi(model, q)
        for rep, sf in reps.items():
            r = max(laplace_identity_residual(sf, model, pq + d) for d in (0.5, 1, 2, 3, 5))
            worst = max(worst, r)
            parts.append(f"{name}/{rep} {r:.1e}")
    return worst < 1e-6, "; ".join(parts)


@_timed(5, "numeric inversion vs closed forms", 10.0)
def criterion_backend_equivalence():
    x = np.linspace(0.0, 10.0, 1000)
    out = []
    for name, model, exact in (("brownian", brownian_model(), scale_brownian(1, 1, 0.1)),
                               ("cl-exponential", cl_model(), scale_cl_exponential(3, 2, 1, 0.1))):
        sf = scale_numeric(model, 0.1, x)
        rel = np.max(np.abs(sf.w[1:] / exact(x[1:]) - 1.0))
        out.append((name, rel))
    worst = max(r for _, r in out)
    return worst < 1e-6, "; ".join(f"{n} {r:.1e}" for n, r in out)


@_timed(6, "MC dividends vs barrier value", 120.0)
def criterion_mc_dividends(paths=100_000, seed=20240601):
    lines, ok = [], True
    for name, model, sf in (("brownian", brownian_model(), scale_brownian(1, 1, 0.1)),
                            ("cl-exponential", cl_model(), scale_cl_exponential(3, 2, 1, 0.1))):
        a = optimal_barrier(sf, 30.0)
        for k, x0 in enumerate((0.5 * a, a, 2 * a)):
            est = estimate_dividends(SimConfig(model, x0, BarrierPolicy(a), q=0.1, paths=paths,
                                               seed=seed + k))
            v = barrier_value(sf, a, x0)
            z = (est.mean - v) / est.se
            ok &= abs(z) <= 3
            lines.append(f"{name} x0={x0:.3f} {est.mean:.4f}±{est.se:.4f} vs {v:.4f} (z={z:+.2f})")
    return ok, "; ".join(lines)


@_timed(7, "MC exit laws", 60.0)
def criterion_mc_exit(paths=100_000, seed=777):
    model = brownian_model()
    w0 = scale_brownian(1, 1, 0.0)
    two = estimate_exit(SimConfig(model, 1.0, q=0.0, paths=paths, seed=seed), 2.0)
    v_two = float(w0(1.0) / w0(2.0))
    one = estimate_exit(SimConfig(model, 0.0, q=1.5, paths=paths, seed=seed + 1), 1.0, one_sided=True)
    v_one = math.exp(-phi(model, 1.5))
    z1 = (two.mean - v_two) / two.se
    z2 = (one.mean - v_one) / one.se
    return (abs(z1) <= 3 and abs(z2) <= 3,
            f"two-sided {two.mean:.5f}±{two.se:.5f} vs {v_two:.5f} (z={z1:+.2f}); "
            f"one-sided {one.mean:.5f}±{one.se:.5f} vs {v_one:.5f} (z={z2:+.2f})")


@_timed(8, "optimality certificates", 1.0)
def criterion_certificates():
    grid = np.linspace(0.0, 20.0, 1000)
    hyper = hyperexponential()
    lc = {"exponential": log_convexity_certificate(Exponential(1.0), grid),
          "hyperexponential": log_convexity_certificate(hyper, hyper.grid),
          "gamma2": log_convexity_certificate(GammaShape(2, 1.0), grid[1:])}
    cl = scale_cl_exponential(3, 2, 1, 0.1)
    hm = LevyModel.cramer_lundberg(3.0, 2.0, hyper)
    hs = scale_numeric(hm, 0.1, np.linspace(0.0, 20.0, 401))
    am = scale_rational(am_model(), 0.1)
    suff = {"exponential": sufficient_condition(cl, optimal_barrier(cl, 20.0), 20.0),
            "hyperexponential": sufficient_condition(hs, optimal_barrier(hs, 20.0), 20.0),
            "gamma2": sufficient_condition(am, optimal_barrier(am, 30.0), 30.0)}
    ok = (bool(lc["exponential"]) and bool(lc["hyperexponential"]) and not lc["gamma2"]
          and bool(suff["exponential"]) and bool(suff["hyperexponential"]) and not suff["gamma2"])
    detail = "; ".join(f"{k}: {'LogConvex' if lc[k] else 'NotLogConvex'}/{suff[k].kind}" for k in lc)
    return ok, detail


@_timed(9, "exponential martingale", 60.0)
def criterion_martingale(paths=100_000, seed=99):
    q = 0.1
    lines, ok = [], True
    for name, model in (("brownian", brownian_model()), ("cl-exponential", cl_model())):
        p = phi(model, q)
        for j, th in enumerate((0.5 * p, p, p + 1.0)):
            est = estimate_martingale(SimConfig(model, 1.0, q=q, T=1.0, paths=paths,
                                                seed=seed + 10 * j), th)
            z = (est.mean - 1.0) / est.se
            ok &= abs(z) <= 3
            lines.append(f"{name} theta={th:.4f} {est.mean:.5f}±{est.se:.5f} (z={z:+.2f})")
    return ok, "; ".join(lines)


def tail_regression(paths=1_000_000, seed=4242, rho=0.5, min_hits=50, points=40):
    """Slope of ``-log P(I_q > y)`` against ``(1 - rho) varpi(y)`` on the resolvable tail.

    The window runs from the median of ``I_q`` to the largest threshold with
    at least ``min_hits`` exceedances.
    """
    model = brownian_model()
    sf = scale_brownian(1, 1, 0.1)
    a = optimal_barrier(sf, 30.0)
    cfg = SimConfig(model, a, BarrierPolicy(a), q=0.1, paths=paths, seed=seed)
    div = np.sort(_collect(cfg)[0])
    lo = max(float(np.median(div)), 1.0 + 1e-6)
    hi = float(div[-min_hits])
    ys = np.linspace(lo, hi, points)
    n = div.size
    p = (n - np.searchsorted(div, ys, side="right")) / n
    pred = tail_asymptote(model, rho, ys)
    slope, icpt = np.polyfit(pred, -np.log(p), 1)
    return slope, (lo, hi), ys, p, pred


@_timed(10, "tail asymptotics (regression slope)", 600.0)
def criterion_tail(paths=1_000_000, seed=4242):
    slope, (lo, hi), *_ = tail_regression(paths, seed)
    return 0.7 <= slope <= 1.3, f"slope {slope:.3f} on y in [{lo:.2f}, {hi:.2f}]"


@_timed(11, "HJB residuals of barrier curves", 30.0)
def criterion_hjb_residuals():
    lines, ok = [], True
    for name, model, sf in (("brownian", brownian_model(), scale_brownian(1, 1, 0.1)),
                            ("cl-exponential", cl_model(), scale_cl_exponential(3, 2, 1, 0.1))):
        a = optimal_barrier(sf, 30.0)
        cur = barrier_curve(sf, a, np.linspace(0.0, 3 * a, 301))
        below = np.linspace(0.0, a, 41)[1:-1]
        above = np.linspace(a, 3 * a, 41)[1:]
        rb = max(hjb_residual(model, cur, 0.1, x) for x in below)
        rb_abs = max(abs(hjb_residual(model, cur, 0.1, x)) for x in below)
        slope_active = all(float(cur.d1(x)) == 1.0 for x in above)
        ra = max(hjb_residual(model, cur, 0.1, x) for x in above)
        ok &= rb_abs <= 1e-6 and slope_active and ra <= 1e-6
        lines.append(f"{name}: max|res| below a* {rb_abs:.1e}, slope-one above {slope_active}, "
                     f"max res above {ra:.1e}")
    am = am_model()
    sf = scale_rational(am, 0.1)
    a = optimal_barrier(sf, 30.0)
    cur = barrier_curve(sf, a, np.linspace(0.0, 30.0, 301))
    xs = np.linspace(0.25, 15.0, 60)
    gen = np.array([hjb_residual(am, cur, 0.1, x) for x in xs])
    k = int(np.argmax(gen))
    ok &= gen[k] > 1e-6
    lines.append(f"azcue-muler: a*={a:.3g}, max residual {gen[k]:.4f} at x={xs[k]:.2f}")
    return ok, "; ".join(lines)


CRITERIA = (criterion_am_roots, criterion_am_bands, criterion_closed_barriers,
            criterion_laplace_identity, criterion_backend_equivalence, criterion_mc_dividends,
            criterion_mc_exit, criterion_certificates, criterion_martingale, criterion_tail,
            criterion_hjb_residuals)

_MC = {6, 7, 9, 10}


def run(only=None, paths: Optional[int] = None, progress: Optional[Callable] = None) -> list:
    """Run the selected criteria; ``paths`` overrides every Monte Carlo path count."""
    out = []
    for fn in CRITERIA:
        if only and fn.number not in only:
            continue
        kw = {"paths": paths} if paths is not None and fn.number in _MC else {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = fn(**kw)
        out.append(res)
        if progress is not None:
            progress(res)
    return out


def format_line(r: Result) -> str:
    flag = "PASS" if r.passed else "FAIL"
    slow = "" if r.seconds <= r.budget else f" [over {r.budget:.0f}s budget]"
    return f"[{flag}] {r.number:2d}. {r.title} ({r.seconds:.1f}s{slow}): {r.detail}"


def format_table(results) -> str:
    lines = [format_line(r) for r in results]
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} criteria passed; kernels: "
                 f"{'compiled' if _backend.COMPILED else 'python'}")
    return "\n".join(lines)
