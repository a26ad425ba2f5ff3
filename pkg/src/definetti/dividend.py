"""Barrier and band dividend strategies: values, optimal barrier, certificates.

Values are in the uncompensated model with discount rate ``q``.  A barrier
strategy at level ``a`` pays out everything above ``a``; its value is
``W(x) / W'(a)`` below the barrier and grows with slope one above it.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .levy import (LevyModel, laplace_exponent, log_convexity_certificate, phi,
                   tail_rate)
from .scale import ScaleFunction

__all__ = [
    "BarrierPolicy", "BandPolicy", "ValueCurve", "OptimalityCertificate",
    "barrier_value", "barrier_curve", "optimal_barrier", "sufficient_condition",
    "certify", "exit_up", "one_sided_up", "generator_apply", "hjb_residual",
    "tail_rate", "tail_asymptote", "write_value_csv", "certificate_record",
    "QuadratureError",
]

HOLDS = "SufficientConditionHolds"
LOG_CONVEX = "LogConvexDensity"
VIOLATED = "Violated"


class QuadratureError(ArithmeticError):
    def __init__(self, achieved):
        super().__init__(f"jump integral did not converge (error estimate {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class BarrierPolicy:
    a: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a >= 0):
            raise ValueError(f"barrier must be finite and >= 0, got {self.a}")


@dataclass(frozen=True)
class BandPolicy:
    """Ladder ``0 = b_1 <= a_1 < b_2 <= a_2 < ...`` given as ``(b_i, a_i)`` pairs.

    In ``[b_i, a_i]`` nothing is paid; ``a_i`` reflects; from ``(a_i, b_{i+1})``
    the excess down to ``a_i`` is paid at once.  The last barrier is
    reflecting for good.
    """

    bands: tuple

    def __post_init__(self):
        bands = tuple((float(b), float(a)) for b, a in self.bands)
        if not bands:
            raise ValueError("need at least one band")
        prev = -math.inf
        for b, a in bands:
            if not (b <= a and b > prev or (b == prev == 0)):
                raise ValueError(f"bands must satisfy b_i <= a_i < b_(i+1): {bands}")
            prev = a
        if bands[0][0] != 0:
            raise ValueError("first band must start at 0")
        object.__setattr__(self, "bands", bands)

    @property
    def lower(self):
        return np.array([b for b, _ in self.bands])

    @property
    def upper(self):
        return np.array([a for _, a in self.bands])


@dataclass(frozen=True, eq=False)
class ValueCurve:
    """Value function on a grid.

    ``evaluator`` optionally supplies exact ``(v, v', v'')`` callables; without
    it ``v`` is a cubic spline through the grid values and the derivatives are
    second-order differences, interpolated linearly.  With ``zero_below`` the
    curve is 0 for ``x < 0``.
    """

    x: np.ndarray
    v: np.ndarray
    q: float
    policy: Union[BarrierPolicy, BandPolicy, None] = None
    evaluator: Optional[tuple] = None
    zero_below: bool = True
    _interp: tuple = field(default=(), repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if self.evaluator is None:
            d1 = np.gradient(v, x, edge_order=2)
            d2 = _second_difference(x, v)
            object.__setattr__(self, "_interp", (CubicSpline(x, v), d1, d2))

    def _ev(self, i, z):
        z = np.asarray(z, dtype=float)
        if self.evaluator is not None:
            out = np.asarray(self.evaluator[i](z), dtype=float)
        else:
            zc = np.clip(z, self.x[0], self.x[-1])
            out = self._interp[0](zc) if i == 0 else np.interp(zc, self.x, self._interp[i])
        if self.zero_below:
            out = np.where(z >= 0, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def __call__(self, z):
        return self._ev(0, z)

    def d1(self, z):
        return self._ev(1, z)

    def d2(self, z):
        return self._ev(2, z)


def _second_difference(x, v):
    """Three-point ``v''`` (compact on uniform grids), one-sided at the ends."""
    if v.size < 4:
        return np.gradient(np.gradient(v, x), x)
    hl = np.diff(x)[:-1]
    hr = np.diff(x)[1:]
    out = np.empty_like(v)
    out[1:-1] = 2 * (hl * v[2:] - (hl + hr) * v[1:-1] + hr * v[:-2]) / (hl * hr * (hl + hr))
    h0, h1 = x[1] - x[0], x[-1] - x[-2]
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h0 ** 2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h1 ** 2
    return out


@dataclass(frozen=True)
class OptimalityCertificate:
    kind: str
    a_star: float
    witness: Optional[float] = None
    residual: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (HOLDS, LOG_CONVEX, VIOLATED):
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if (self.kind == VIOLATED) != (self.witness is not None):
            raise ValueError("a witness is present exactly when the certificate is Violated")

    def __bool__(self):
        return self.kind != VIOLATED


# --------------------------------------------------------------------------
# barrier strategies
# --------------------------------------------------------------------------

def _w1_at(sf, a, tol=1e-14):
    d = float(sf.d1(a))
    if not d > tol:
        raise ZeroDivisionError(f"W'(a) = {d:.3e} is not positive at a = {a}")
    return d


def barrier_value(sf: ScaleFunction, a: float, x):
    """Value of the barrier strategy at level ``a`` started from ``x``."""
    BarrierPolicy(a)
    d = _w1_at(sf, a)
    x = np.asarray(x, dtype=float)
    below = sf(np.minimum(x, a)) / d
    out = np.where(x > a, x - a + float(sf(a)) / d, below)
    out = np.where(x < 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def barrier_curve(sf: ScaleFunction, a: float, x_grid) -> ValueCurve:
    """:func:`barrier_value` on a grid, with exact derivatives attached."""
    d = _w1_at(sf, a)
    wa = float(sf(a))

    def v(z):
        return barrier_value(sf, a, z)

    def v1(z):
        z = np.asarray(z, dtype=float)
        return np.where(z > a, 1.0, sf.d1(np.minimum(z, a)) / d)

    def v2(z):
        z = np.asarray(z, dtype=float)
        return np.where(z > a, 0.0, sf.d2(np.minimum(z, a)) / d)

    x = np.asarray(x_grid, dtype=float)
    return ValueCurve(x=x, v=np.asarray(v(x)), q=sf.q, policy=BarrierPolicy(a),
                      evaluator=(v, v1, v2))


def optimal_barrier(sf: ScaleFunction, search_max: float, points: int = 2048) -> float:
    """Smallest global minimiser of ``W'`` on ``[0, search_max]``."""
    if not search_max > 0:
        raise ValueError("search_max must be positive")
    if search_max > sf.x_max:
        raise ValueError(f"search window exceeds the tabulated range {sf.x_max}")
    xs = np.linspace(0.0, search_max, points)
    d1 = np.asarray(sf.d1(xs))
    i = int(np.argmin(d1))  # first index on ties: the infimum
    if i == points - 1:
        warnings.warn("minimiser of W' sits at the end of the search window; enlarge it",
                      RuntimeWarning, stacklevel=2)
        return float(search_max)
    if i == 0:
        return 0.0
    lo, hi = xs[i - 1], xs[i + 1]
    f = lambda z: float(sf.d2(z))
    flo, fhi = f(lo), f(hi)
    if flo < 0 < fhi:
        return float(brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))
    return float(xs[i])


def _mixture_tail_start(sf: ScaleFunction, x0: float):
    """Point beyond which the leading exponential fixes the sign of ``W''``.

    Returns ``(x_tail, sign)``.
    """
    order = np.argsort(sf.rates)[::-1]
    rates, coefs = sf.rates[order], sf.coefs[order]
    lead = coefs[0] * rates[0] ** 2
    if lead == 0:
        return x0, 0
    rest = np.abs(coefs[1:]) * rates[1:] ** 2
    # sum_i rest_i exp(z_i x) <= |lead| exp(z_0 x) once every gap has closed
    gaps = rates[0] - rates[1:]
    with np.errstate(divide="ignore"):
        need = np.where(rest > 0, np.log(np.maximum(rest * len(rest), 1e-300) / abs(lead)) / gaps,
                        -np.inf)
    return max(x0, float(np.max(need, initial=x0))), int(np.sign(lead))


def sufficient_condition(sf: ScaleFunction, a_star: float, x_max: float,
                         points: int = 4096, tol: Optional[float] = None) -> OptimalityCertificate:
    """Check that ``W'`` is nondecreasing on ``[a_star, x_max]``.

    ``tol`` is relative to the largest ``|W'|`` seen; it defaults to ``1e-10``
    for mixtures and ``1e-6`` for grids, whose derivative carries the
    interpolation error.  Mixtures also get the tail beyond ``x_max``.
    """
    if not x_max > a_star:
        raise ValueError("x_max must exceed a_star")
    hi = x_max
    sign = 1
    if sf.is_mixture:
        tail, sign = _mixture_tail_start(sf, x_max)
        hi = min(max(x_max, tail), x_max + 1e4)
    else:
        hi = min(x_max, sf.x_max)
    if tol is None:
        tol = 1e-10 if sf.is_mixture else 1e-6
    xs = np.linspace(a_star, hi, points if hi == x_max else max(points, int(points * hi / x_max)))
    d1 = np.asarray(sf.d1(xs))
    scale = float(np.max(np.abs(d1)))
    drops = d1[:-1] - d1[1:]
    bad = np.flatnonzero(drops > tol * scale)
    if bad.size:
        j = int(bad[0])
        return OptimalityCertificate(VIOLATED, a_star, witness=float(xs[j]),
                                     residual=float(drops[j]))
    if sign < 0:
        return OptimalityCertificate(VIOLATED, a_star, witness=float(hi), residual=math.inf)
    return OptimalityCertificate(HOLDS, a_star)


def certify(model: LevyModel, sf: ScaleFunction, a_star: float, x_max: float,
            density_grid=None) -> OptimalityCertificate:
    """Log-convex jump density when a grid is given and the test passes, else the W' check."""
    if density_grid is not None and model.density is not None:
        if log_convexity_certificate(model.density, density_grid):
            return OptimalityCertificate(LOG_CONVEX, a_star)
    return sufficient_condition(sf, a_star, x_max)


# --------------------------------------------------------------------------
# exit problems and tails
# --------------------------------------------------------------------------

def exit_up(sf: ScaleFunction, x, a: float):
    """``E_x[e^{-q tau_a^+}; tau_a^+ < tau_0^-] = W(x) / W(a)``."""
    if not a > 0:
        raise ValueError("a must be positive")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > a)):
        raise ValueError("x must lie in [0, a]")
    out = sf(x) / float(sf(a))
    return float(out) if np.ndim(out) == 0 else out


def one_sided_up(model: LevyModel, x, a: float, q: float):
    """``E_x[e^{-q tau_a^+}] = exp(-Phi(q) (a - x))``."""
    x = np.asarray(x, dtype=float)
    if np.any(x > a):
        raise ValueError("need x <= a")
    out = np.exp(-phi(model, q) * (a - x))
    return float(out) if out.ndim == 0 else out


def tail_asymptote(model: LevyModel, rho: float, y):
    """Predicted ``-log P(I_q > y)``: ``(1 - rho) varpi(y)``."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if np.ndim(y) == 0:
        return (1.0 - rho) * tail_rate(model, float(y))
    return np.array([(1.0 - rho) * tail_rate(model, float(v)) for v in np.ravel(y)])


# --------------------------------------------------------------------------
# generator and HJB residual
# --------------------------------------------------------------------------

def _jump_integral(model: LevyModel, v: ValueCurve, x: float, vx: float,
                   epsabs=1e-12, epsrel=1e-11) -> float:
    dens = model.density
    breaks = []
    if isinstance(v.policy, BarrierPolicy) and 0 < x - v.policy.a < x:
        breaks.append(x - v.policy.a)
    elif isinstance(v.policy, BandPolicy):
        for b, a in v.policy.bands:
            for edge in (a, b):
                if 0 < x - edge < x:
                    breaks.append(x - edge)
    f = lambda y: (float(v(x - y)) - vx) * float(dens.pdf(y))
    total = 0.0
    err = 0.0
    if x > 0:
        val, e = quad(f, 0.0, x, points=sorted(set(breaks)) or None, limit=400,
                      epsabs=epsabs, epsrel=epsrel)
        total += val
        err += e
    if v.zero_below:
        total -= vx * (1.0 - float(dens.cdf(x)))
    else:
        val, e = quad(f, x, np.inf, limit=400, epsabs=epsabs, epsrel=epsrel)
        total += val
        err += e
    if err > 1e-7 * max(1.0, abs(total)):
        raise QuadratureError(err)
    return total


def generator_apply(model: LevyModel, v: ValueCurve, x: float) -> float:
    """``(sigma^2/2) v'' + c v' + lam int [v(x-y) - v(x)] rho(y) dy`` at ``x``."""
    x = float(x)
    vx = float(v(x))
    out = model.drift * float(v.d1(x))
    if model.sigma > 0:
        out += 0.5 * model.sigma ** 2 * float(v.d2(x))
    if model.jumps is not None:
        out += model.lam * _jump_integral(model, v, x, vx)
    return out


def hjb_residual(model: LevyModel, v: ValueCurve, q: float, x: float) -> float:
    """``max{(L v)(x) - q v(x), 1 - v'(x)}``; zero where the equation holds."""
    lv = generator_apply(model, v, x) - q * float(v(x))
    return max(lv, 1.0 - float(v.d1(x)))


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def write_value_csv(curve: ValueCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "v"])
        for a, b in zip(curve.x, curve.v):
            out.writerow([f"{a:.17g}", f"{b:.17g}"])


def certificate_record(cert: OptimalityCertificate) -> dict:
    return {"kind": cert.kind, "a_star": cert.a_star, "witness": cert.witness,
            "residual": cert.residual}


def write_certificate_json(cert: OptimalityCertificate, path) -> None:
    with open(path, "w") as fh:
        json.dump(certificate_record(cert), fh, indent=2, allow_nan=True)
