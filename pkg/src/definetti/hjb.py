"""Grid solver for the dividend HJB variational inequality.

The inequality ``max{L v - q v, 1 - v'} = 0`` is discretised on a uniform
grid as a two-action control problem.  At node ``i`` one either pays
(``v_i = v_{i-1} + h``) or continues, where continuing imposes the upwind
generator row

    a_up v_{i+1} + a_0 v_i + a_dn v_{i-1} + lam J_i = 0,

``J_i`` being the jump integral with hat-function weights and ``v = 0`` below
zero.  Howard's policy iteration solves the discrete problem; started from a
coarse grid and prolonged level by level, it needs only a couple of sweeps per
level.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .dividend import BandPolicy, ValueCurve, generator_apply
from .levy import LevyModel

A1, A2, A3 = "A1", "A2", "A3"


class HjbConvergenceError(ArithmeticError):
    def __init__(self, msg, worst):
        super().__init__(f"{msg} (worst residual {worst:.3e})")
        self.worst = worst


class LadderError(ValueError):
    def __init__(self, msg, components):
        super().__init__(f"{msg}: {components}")
        self.components = components


@dataclass(eq=False)
class HjbSolution:
    x: np.ndarray
    v: np.ndarray
    pay: np.ndarray            # chosen action per node
    res_l: np.ndarray          # (L_h v - q v)_i
    res_slope: np.ndarray      # 1 - (v_i - v_{i-1}) / h
    q: float
    iterations: list = field(default_factory=list)   # (n, sweeps) per level
    history: list = field(default_factory=list)      # sup-norm Bellman residual per sweep
    labels: Optional[np.ndarray] = None
    ambiguous: int = 0
    gap: Optional[np.ndarray] = None  # continuation minus pay value, for edge refinement

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def curve(self) -> ValueCurve:
        return ValueCurve(x=self.x, v=self.v, q=self.q)


# --------------------------------------------------------------------------
# discretisation
# --------------------------------------------------------------------------

def jump_weights(model: LevyModel, n: int, h: float):
    """Hat-function weights of the jump density.

    ``w[m]`` integrates the density against the hat centred at ``m h`` (half
    hat for ``m = 0``); ``e[m]`` is the rising half hat on
    ``[(m-1)h, mh]`` that carries ``v_0``.
    """
    if model.jumps is None:
        return np.zeros(n + 1), np.zeros(n + 1)
    dens = model.density
    y = np.arange(n + 2) * h
    dF = np.diff(dens.cdf(y))
    dG = np.diff(dens.partial_mean(y))
    rise = (dG - y[:-1] * dF) / h
    fall = dF - rise
    w = np.empty(n + 1)
    w[0] = fall[0]
    w[1:] = rise[:n] + fall[1:n + 1]
    e = np.zeros(n + 1)
    e[1:] = rise[:n]
    return w, e


def _coefficients(model: LevyModel, q: float, h: float, scheme: str):
    s2 = model.sigma ** 2 / (2 * h * h)
    c = model.drift
    if scheme == "central":
        if model.sigma > 0 and abs(c) > model.sigma ** 2 / h:
            raise ValueError("central drift differencing is not monotone at this h")
        a_up, a_dn = s2 + c / (2 * h), s2 - c / (2 * h)
        a_0 = -2 * s2
    elif scheme == "upwind":
        a_up = s2 + max(c, 0.0) / h
        a_dn = s2 + max(-c, 0.0) / h
        a_0 = -2 * s2 - abs(c) / h
    else:
        raise ValueError(f"unknown drift scheme {scheme!r}")
    return a_up, a_dn, a_0 - model.lam - q


class _Level:
    def __init__(self, model, q, x_max, n, scheme, kern):
        self.n, self.h = n, x_max / n
        self.x = np.arange(n + 1) * self.h
        self.w, self.e = jump_weights(model, n, self.h)
        self.a_up, self.a_dn, self.a_0 = _coefficients(model, q, self.h, scheme)
        self.lam = model.lam
        self.dirichlet0 = model.sigma > 0
        self.kern = kern

    def evaluate(self, pay):
        return np.asarray(self.kern.evaluate_policy(
            np.ascontiguousarray(pay, dtype=np.uint8), self.w, self.e,
            self.a_up, self.a_dn, self.a_0, self.lam, self.h, self.dirichlet0))

    def generator_rows(self, v):
        """``A_i = a_up v_{i+1} + a_0 v_i + a_dn v_{i-1} + lam J_i`` for ``i < n``."""
        J = np.asarray(self.kern.jump_integrals(self.w, self.e, v))
        A = np.zeros_like(v)
        vm = np.concatenate(([0.0], v[:-2]))
        A[:-1] = self.a_up * v[1:] + self.a_0 * v[:-1] + self.a_dn * vm + self.lam * J[:-1]
        if self.dirichlet0:
            A[0] = 0.0
        return A

    def improve(self, v, forced):
        """Greedy policy and the continuation-minus-pay gap per node."""
        A = self.generator_rows(v)
        denom = -(self.a_0 + self.lam * self.w[0])
        cont = v + A / denom
        gap = np.full_like(v, np.inf)
        gap[1:] = cont[1:] - (v[:-1] + self.h)
        pay = gap < 0
        pay[0] = False
        pay |= forced
        return pay, gap, A


def solve_hjb(model: LevyModel, q: float, x_max: float, n: int = 4000, tol: float = 1e-9,
              cap: Optional[float] = None, scheme: str = "auto", coarse: int = 128,
              max_sweeps: int = 200, backend=None) -> HjbSolution:
    """Solve the discrete HJB inequality on ``n + 1`` nodes of ``[0, x_max]``.

    ``cap`` forces payment above that level, i.e. restricts to strategies that
    keep the surplus at or below it.  ``scheme`` selects ``"upwind"`` or
    ``"central"`` drift differencing; ``"auto"`` takes central differences
    whenever they keep the scheme monotone (``|c| h <= sigma^2``).
    """
    if not q >= 0:
        raise ValueError("q must be >= 0")
    if q == 0:
        warnings.warn("q = 0: the value need not be finite; results depend on x_max",
                      RuntimeWarning, stacklevel=2)
    if not x_max > 0 or n < 8:
        raise ValueError("need x_max > 0 and n >= 8")
    kern = backend if backend is not None else _backend.kernels
    if scheme == "auto":
        monotone = model.sigma > 0 and abs(model.drift) * x_max / n <= model.sigma ** 2
        scheme = "central" if monotone else "upwind"
    sizes = [n]
    while sizes[-1] // 2 >= coarse and sizes[-1] % 2 == 0:
        sizes.append(sizes[-1] // 2)
    sizes.reverse()
    pay = None
    iterations, history = [], []
    for m in sizes:
        lev = _Level(model, q, x_max, m, scheme, kern)
        forced = np.zeros(m + 1, bool)
        forced[m] = True  # v' = 1 at x_max
        if cap is not None:
            forced |= lev.x > cap + 1e-12 * x_max
        if pay is None:
            pay = forced.copy()
        else:
            old = np.linspace(0.0, x_max, pay.size)
            pay = pay[np.minimum(np.rint(lev.x / old[1]).astype(int), pay.size - 1)] | forced
        pay[0] = False
        for sweep in range(1, max_sweeps + 1):
            v = lev.evaluate(pay)
            new, gap, A = lev.improve(v, forced)
            history.append(_bellman_residual(v, A, lev, new))
            if np.array_equal(new, pay):
                break
            pay = new
        else:
            raise HjbConvergenceError(f"policy iteration did not settle at n={m}", history[-1])
        iterations.append((m, sweep))
    res_slope = np.zeros_like(v)
    res_slope[1:] = 1.0 - np.diff(v) / lev.h
    res_slope[0] = 1.0 - (v[1] - v[0]) / lev.h
    res_l = A.copy()
    res_l[-1] = res_l[-2]
    sol = HjbSolution(x=lev.x, v=v, pay=pay, res_l=res_l, res_slope=res_slope, q=q,
                      iterations=iterations, history=history, gap=gap)
    worst = _worst(sol, lev, forced)
    if worst > tol * max(1.0, float(np.max(np.abs(v)))):
        raise HjbConvergenceError("discrete HJB inequality not satisfied", worst)
    top = sol.x >= 0.9 * x_max
    if cap is None and not np.all(pay[top]):
        warnings.warn("top decile of the grid is not in the payout region; enlarge x_max",
                      RuntimeWarning, stacklevel=2)
    return sol


def _bellman_residual(v, A, lev, pay):
    slope = np.zeros_like(v)
    slope[1:] = lev.h - np.diff(v)
    r = np.maximum(A / -(lev.a_0 + lev.lam * lev.w[0]), slope)
    return float(np.max(np.abs(r[:-1])))


def _worst(sol, lev, forced):
    """Sup over freely chosen nodes of ``|max{A_i, 1 - D v_i}|`` in value units."""
    diag = -(lev.a_0 + lev.lam * lev.w[0])
    r = np.maximum(sol.res_l / diag, sol.res_slope * lev.h)
    r[0] = sol.res_l[0] / diag  # no pay action at the origin
    free = ~forced
    if lev.dirichlet0:
        free[0] = False
    return float(np.max(np.abs(r[free]))) if np.any(free) else 0.0


# --------------------------------------------------------------------------
# regions and ladders
# --------------------------------------------------------------------------

def extract_regions(sol: HjbSolution, tol: float = 1e-6) -> HjbSolution:
    """Label nodes A1 (slope one, ``L v - q v < 0``), A2 (``L v - q v = 0``) or A3.

    Nodes where both residuals vanish are labelled A2 and counted in
    ``sol.ambiguous``.
    """
    lz = np.abs(sol.res_l) <= tol
    sz = np.abs(sol.res_slope) <= tol
    labels = np.full(sol.x.size, A3, dtype=object)
    labels[sz & (sol.res_l < -tol)] = A1
    labels[lz] = A2
    sol.labels = labels
    sol.ambiguous = int(np.sum(lz & sz))
    return sol


def components(labels, which=A2):
    """Maximal runs ``(first, last)`` of nodes carrying label ``which``."""
    m = np.asarray(labels == which, dtype=np.int8)
    d = np.diff(np.concatenate(([0], m, [0])))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1) - 1))


def _edge(sol, i, j):
    """Sub-cell zero of the continuation-minus-pay gap between nodes i and j."""
    g = sol.gap
    gi, gj = g[i], g[j]
    if not (np.isfinite(gi) and np.isfinite(gj)) or gi == gj or gi * gj > 0:
        return 0.5 * (sol.x[i] + sol.x[j])
    t = gi / (gi - gj)
    return float(sol.x[i] + t * (sol.x[j] - sol.x[i]))


def bands_from_regions(sol: HjbSolution) -> BandPolicy:
    """Read the band ladder off the labelled A2 components."""
    if sol.labels is None:
        raise ValueError("label the solution with extract_regions first")
    comps = components(sol.labels, A2)
    last = sol.x.size - 1
    comps = [(i, j) for i, j in comps if i < last]
    raw = [(float(sol.x[i]), float(sol.x[j])) for i, j in comps]
    if not comps or comps[0][0] != 0:
        raise LadderError("first continuation region must contain the origin", raw)
    ladder = []
    for k, (i, j) in enumerate(comps):
        b = 0.0 if k == 0 else _edge(sol, i - 1, i)
        a = 0.0 if j == 0 else (_edge(sol, j, j + 1) if j < last else float(sol.x[j]))
        ladder.append((b, a))
    try:
        return BandPolicy(tuple(ladder))
    except ValueError as exc:
        raise LadderError(str(exc), raw) from None


def verify_value(sol: HjbSolution, model: LevyModel, q: float, samples: int = 200,
                 edge_cells: int = 1) -> dict:
    """Independent residual check with :func:`dividend.generator_apply`.

    Nodes within ``edge_cells`` of an action switch are excluded from the sup
    norms, the generator being undefined at a kink of ``v'``.
    """
    curve = sol.curve()
    idx = np.unique(np.linspace(1, sol.x.size - 2, samples).astype(int))
    switch = np.flatnonzero(np.diff(sol.pay.astype(np.int8))) + 0.5
    near = np.array([np.min(np.abs(switch - i)) <= edge_cells + 0.5 if switch.size else False
                     for i in idx])
    lres, sres = [], []
    for i, skip in zip(idx, near):
        if skip:
            continue
        x = float(sol.x[i])
        if sol.pay[i]:
            sres.append(abs(1.0 - float(curve.d1(x))))
        else:
            lres.append(abs(generator_apply(model, curve, x) - q * float(curve(x))))
    excess = sol.v - sol.x
    upper = sol.x + sol.v[0] + model.drift / q
    lower = sol.x + sol.v[0]
    return {
        "generator_sup": max(lres, default=0.0),
        "slope_sup": max(sres, default=0.0),
        "checked": int(len(lres) + len(sres)),
        "excluded_near_edges": int(np.sum(near)),
        "upper_bound_ok": bool(np.all(sol.v <= upper + 1e-9)),
        "lower_bound_ok": bool(np.all(sol.v >= lower - 1e-9)),
        "excess_nondecreasing": bool(np.all(np.diff(excess) >= -1e-9)),
        "excess_bounded": bool(excess[-1] <= sol.v[0] + model.drift / q),
    }


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def write_solution_csv(sol: HjbSolution, path) -> None:
    labels = sol.labels if sol.labels is not None else np.full(sol.x.size, "")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "v", "residual_L", "residual_slope", "region"])
        for x, v, rl, rs, lab in zip(sol.x, sol.v, sol.res_l, sol.res_slope, labels):
            out.writerow([f"{x:.17g}", f"{v:.17g}", f"{rl:.17g}", f"{rs:.17g}", lab])


def band_report(sol: HjbSolution, policy: BandPolicy) -> dict:
    return {
        "ladder": [list(p) for p in policy.bands],
        "edge_accuracy": sol.h,
        "grid": {"n": int(sol.x.size - 1), "x_max": float(sol.x[-1])},
        "iterations": [list(map(int, p)) for p in sol.iterations],
        "ambiguous_nodes": int(sol.ambiguous),
    }


def write_band_json(sol: HjbSolution, policy: BandPolicy, path) -> None:
    with open(path, "w") as fh:
        json.dump(band_report(sol, policy), fh, indent=2)
