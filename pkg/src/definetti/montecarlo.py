"""Monte Carlo oracle for regulated surplus processes.

Every path draws from its own Philox stream keyed by the seed with the path
index in the upper half of the counter, so results do not depend on how
paths are scheduled.  Compound-Poisson parts are simulated exactly.  The
Brownian part moves on a ``dt`` grid cut at jump epochs; barrier crossings
inside a step are decided by sampling the maximum (or minimum) of the
Brownian bridge between the two endpoints.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.stats import binomtest

from . import _backend, _fallback
from .dividend import BandPolicy, BarrierPolicy
from .levy import GammaShape, LevyModel, Tabulated, laplace_exponent, mean_x1

HORIZON, RUIN, UP = _fallback.HORIZON, _fallback.RUIN, _fallback.UP
_KINDS = {HORIZON: "horizon", RUIN: "ruin", UP: "up"}


class AdmissibilityError(AssertionError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``T`` defaults to the smallest horizon with ``exp(-qT) c / q`` below a
    tenth of ``target_se``.  ``dt`` is the Brownian step (default 0.05).
    ``debug`` switches to the reference kernel and checks every payout.
    """

    model: LevyModel
    x0: float
    policy: Union[BarrierPolicy, BandPolicy, None] = None
    q: float = 0.0
    T: Optional[float] = None
    dt: Optional[float] = None
    paths: int = 10_000
    seed: int = 0
    target_se: float = 0.01
    kill: bool = True
    debug: bool = False

    def __post_init__(self):
        if not self.x0 >= 0:
            raise ValueError("x0 must be >= 0")
        if not self.q >= 0:
            raise ValueError("q must be >= 0")
        if self.paths < 1:
            raise ValueError("paths must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if isinstance(self.model.density, Tabulated):
            raise ValueError("no sampler for tabulated jump densities")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else 0.05

    @property
    def horizon(self) -> float:
        if self.T is not None:
            return float(self.T)
        if self.q == 0:
            raise ValueError("set T explicitly when q = 0")
        c = max(self.model.drift, 1e-300)
        return max(1.0, math.log(c / (self.q * 0.1 * self.target_se)) / self.q)

    @property
    def bias_bound(self) -> float:
        if self.q == 0:
            return math.inf
        return math.exp(-self.q * self.horizon) * self.model.drift / self.q


class SimEstimate(NamedTuple):
    mean: float
    se: float
    paths: int
    ruin_fraction: float
    bias_bound: float
    seed: int

    def record(self) -> dict:
        return dict(self._asdict())


class PathRecord(NamedTuple):
    index: int
    dividends: float
    stop_time: float
    stop: str
    x_end: float
    up_discount: float


class TailEstimate(NamedTuple):
    y: float
    p: float
    ci_low: float
    ci_high: float
    exceedances: int
    paths: int


def path_stream(seed: int, index: int) -> np.random.Philox:
    """Bit generator of path ``index``: Philox keyed by ``seed``, counter ``index << 128``."""
    return np.random.Philox(key=int(seed), counter=int(index) << 128)


def _bands(policy):
    if policy is None:
        return np.zeros(0), np.zeros(0)
    if isinstance(policy, BarrierPolicy):
        return np.zeros(1), np.array([float(policy.a)])
    return (np.ascontiguousarray(policy.lower, dtype=float),
            np.ascontiguousarray(policy.upper, dtype=float))


def _jump_params(model: LevyModel):
    if model.jumps is None:
        return 0.0, 1, 1.0
    dens = model.density
    if not isinstance(dens, GammaShape):
        raise ValueError("no sampler for this jump density")
    return model.lam, dens.k, dens.mu


def _check_trace(trace, c, index):
    for kind, t, amount, before, after in trace:
        if amount < 0 or after < 0:
            raise AdmissibilityError(f"path {index}: negative payout or level at t={t}")
        if kind == "lump" and amount > before - after + 1e-12 * max(1.0, abs(before)):
            raise AdmissibilityError(f"path {index}: lump {amount} exceeds surplus above target")
        if kind == "rate" and amount > c * (1 + 1e-12):
            raise AdmissibilityError(f"path {index}: payout rate above the premium rate")


def simulate_paths(cfg: SimConfig, up: float = math.inf, start: int = 0,
                   backend=None) -> Iterator[PathRecord]:
    """Yield one :class:`PathRecord` per path of ``cfg``."""
    kern = _fallback if cfg.debug else (backend if backend is not None else _backend.kernels)
    m = cfg.model
    lam, k, mu = _jump_params(m)
    bb, ba = _bands(cfg.policy)
    T = cfg.horizon
    dt = cfg.step
    args = (float(m.sigma), float(m.drift), float(lam), int(k), float(mu), float(cfg.x0),
            float(T), float(dt), float(cfg.q), bb, ba, bool(cfg.kill), float(up))
    for i in range(start, start + cfg.paths):
        bg = path_stream(cfg.seed, i)
        if cfg.debug:
            trace = []
            out = kern.simulate_path(bg, *args, trace=trace)
            _check_trace(trace, m.drift, i)
        else:
            out = kern.simulate_path(bg, *args)
        div, stop_t, kind, x_end, disc = out
        yield PathRecord(i, div, stop_t, _KINDS[kind], x_end, disc)


def _collect(cfg, up=math.inf, backend=None):
    n = cfg.paths
    div = np.empty(n)
    disc = np.empty(n)
    xend = np.empty(n)
    stop = np.empty(n, dtype=np.int8)
    code = {v: k for k, v in _KINDS.items()}
    for j, rec in enumerate(simulate_paths(cfg, up=up, backend=backend)):
        div[j], disc[j], xend[j], stop[j] = rec.dividends, rec.up_discount, rec.x_end, code[rec.stop]
    return div, disc, xend, stop


def _estimate(values, stop, bias, seed):
    n = values.size
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return SimEstimate(float(np.mean(values)), se, n, float(np.mean(stop == RUIN)),
                       float(bias), int(seed))


def estimate_dividends(cfg: SimConfig, backend=None) -> SimEstimate:
    """Expected discounted dividends until ruin or the horizon."""
    if cfg.policy is None:
        raise ValueError("a dividend policy is required")
    div, _, _, stop = _collect(cfg, backend=backend)
    return _estimate(div, stop, cfg.bias_bound, cfg.seed)


def estimate_exit(cfg: SimConfig, a: float, one_sided: bool = False, backend=None) -> SimEstimate:
    """``E[exp(-q tau_a^+); tau_a^+ < tau_0^-]``, or ``E[exp(-q tau_a^+)]`` when ``one_sided``.

    Paths still inside at the horizon count as zero; the reported bias bound
    is ``exp(-qT)`` times the fraction of such paths.
    """
    if not 0 <= cfg.x0 <= a:
        raise ValueError("need 0 <= x0 <= a")
    T = cfg.T
    if T is None:
        if cfg.q > 0:
            T = max(1.0, math.log(1.0 / (0.1 * cfg.target_se)) / cfg.q)
        else:
            T = 200.0 * (a - cfg.x0 + 1.0) / mean_x1(cfg.model)
    cfg = replace(cfg, policy=None, kill=not one_sided, T=T)
    _, disc, _, stop = _collect(cfg, up=a, backend=backend)
    alive = float(np.mean(stop == HORIZON))
    return _estimate(disc, stop, math.exp(-cfg.q * T) * alive, cfg.seed)


def terminal_values(cfg: SimConfig, backend=None) -> np.ndarray:
    """``X_T`` of the unregulated, unkilled process."""
    if cfg.T is None:
        raise ValueError("T is required")
    cfg = replace(cfg, policy=None, kill=False)
    return _collect(cfg, backend=backend)[2]


def estimate_martingale(cfg: SimConfig, theta: float, backend=None) -> SimEstimate:
    """Sample mean of ``exp(theta (X_T - x0) - psi(theta) T)``; equals 1 in expectation."""
    x = terminal_values(cfg, backend=backend)
    vals = np.exp(theta * (x - cfg.x0) - laplace_exponent(cfg.model, theta) * cfg.T)
    return _estimate(vals, np.zeros(x.size, dtype=np.int8), 0.0, cfg.seed)


def estimate_tail(cfg: SimConfig, thresholds: Sequence[float], backend=None,
                  level: float = 0.95) -> list:
    """Empirical ``P(I_q > y)`` with Wilson intervals, ``I_q`` the discounted dividends."""
    if not isinstance(cfg.policy, BarrierPolicy):
        raise ValueError("tail estimates need a barrier policy")
    div = _collect(cfg, backend=backend)[0]
    out = []
    n = div.size
    for y in thresholds:
        hits = int(np.sum(div > y))
        if hits < 50:
            warnings.warn(f"only {hits} exceedances of y={y}", RuntimeWarning, stacklevel=2)
        ci = binomtest(hits, n).proportion_ci(confidence_level=level, method="wilson")
        out.append(TailEstimate(float(y), hits / n, float(ci.low), float(ci.high), hits, n))
    return out


def supremum_dividends(model: LevyModel, a: float, q: float, T: float, paths: int,
                       seed: int = 0) -> np.ndarray:
    """Dividends of the barrier at ``a`` from ``x0 = a``, built from the running supremum.

    The payout up to ``t`` is ``sup_{s<=t} X_s - a`` for the free process
    started at ``a``, and ruin is the first time the drawdown from the
    supremum exceeds ``a``.  Bounded-variation models only.
    """
    if model.sigma > 0:
        raise ValueError("direct supremum simulation covers bounded-variation models only")
    lam, k, mu = _jump_params(model)
    c = model.drift
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.empty(paths)
    for p in range(paths):
        t, x, sup, div = 0.0, a, a, 0.0
        while t < T:
            tau = t + rng.standard_exponential() / lam if lam > 0 else math.inf
            end = min(tau, T)
            t_hit = t + (sup - x) / c
            if t_hit < end:
                div += c * (math.exp(-q * t_hit) - math.exp(-q * end)) / q if q > 0 \
                    else c * (end - t_hit)
                sup += c * (end - t_hit)
                x = sup
            else:
                x += c * (end - t)
            t = end
            if t >= T:
                break
            x -= rng.standard_exponential(k).sum() / mu
            if sup - x > a:
                break
        out[p] = div
    return out


def write_tail_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["y", "p", "ci_low", "ci_high", "exceedances", "paths"])
        for r in rows:
            out.writerow([f"{r.y:.17g}", f"{r.p:.17g}", f"{r.ci_low:.17g}",
                          f"{r.ci_high:.17g}", r.exceedances, r.paths])


def write_estimate_json(est: SimEstimate, path, **extra) -> None:
    with open(path, "w") as fh:
        json.dump({**est.record(), **extra}, fh, indent=2, allow_nan=True)
