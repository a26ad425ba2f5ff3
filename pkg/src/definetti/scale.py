"""q-scale functions W^(q) of a spectrally negative Lévy process.

Two representations are supported.  Closed forms and partial fractions give
an exponential mixture ``W(x) = sum_i A_i exp(z_i x)``; everything else is a
tabulated grid obtained by inverting the Laplace transform of the tilted
function ``exp(-Phi(q) x) W(x)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import talbot
from .levy import (GammaShape, LevyModel, Tabulated, laplace_exponent,
                   laplace_exponent_ext, laplace_exponent_prime, phi)


class SingularParameterError(ValueError):
    """Repeated roots of ``psi(theta) = q``; perturb q slightly."""


class InversionAccuracyError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class ScaleFunction:
    """Evaluable W^(q).

    Exactly one of ``rates``/``coefs`` (mixture) or ``x``/``w``/``w1`` (grid)
    is populated.  ``smoothness`` is ``"C2"`` with a Brownian part, else
    ``"C1"``.
    """

    q: float
    smoothness: str
    rates: Optional[np.ndarray] = None
    coefs: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    w1: Optional[np.ndarray] = None
    phi_q: float = 0.0
    w_inf: float = math.nan  # limit of exp(-phi_q x) W(x)
    _interp: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.is_mixture:
            object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))
            object.__setattr__(self, "coefs", np.asarray(self.coefs, dtype=float))
        else:
            x = np.asarray(self.x, dtype=float)
            if x[0] != 0 or np.any(np.diff(x) <= 0):
                raise ValueError("grid must be increasing and start at 0")
            w_int = PchipInterpolator(x, self.w, extrapolate=False)
            w1 = w_int.derivative()(x) if self.w1 is None else np.asarray(self.w1)
            object.__setattr__(self, "w1", w1)
            object.__setattr__(self, "_interp",
                               (w_int, PchipInterpolator(x, w1, extrapolate=False)))

    @property
    def is_mixture(self) -> bool:
        return self.rates is not None

    @property
    def kind(self) -> str:
        return "ExponentialMixture" if self.is_mixture else "NumericGrid"

    @property
    def w2_accuracy(self) -> str:
        return "exact" if self.is_mixture else "first-order"

    @property
    def x_max(self) -> float:
        return math.inf if self.is_mixture else float(self.x[-1])

    def _mix(self, x, power):
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 0.0)[..., None]
        vals = (self.coefs * self.rates ** power * np.exp(self.rates * xs)).sum(axis=-1)
        return np.where(x >= 0, vals, 0.0)

    def _grid(self, which, x):
        x = np.asarray(x, dtype=float)
        if np.any(x > self.x[-1] * (1 + 1e-12)):
            raise ValueError(f"x beyond the tabulated range [0, {self.x[-1]}]")
        vals = self._interp[which](np.clip(x, 0.0, self.x[-1]))
        return np.where(x >= 0, vals, 0.0)

    def __call__(self, x):
        return self._mix(x, 0) if self.is_mixture else self._grid(0, x)

    def d1(self, x):
        return self._mix(x, 1) if self.is_mixture else self._grid(1, x)

    def d2(self, x):
        if self.is_mixture:
            return self._mix(x, 2)
        x = np.asarray(x, dtype=float)
        h = float(self.x[1] - self.x[0])
        lo = np.clip(x - h, 0.0, self.x[-1])
        hi = np.clip(x + h, 0.0, self.x[-1])
        return np.where(x >= 0, (self.d1(hi) - self.d1(lo)) / (hi - lo), 0.0)


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def eval_w(sf: ScaleFunction, x):
    return _scalar(sf(x))


def eval_w1(sf: ScaleFunction, x):
    return _scalar(sf.d1(x))


def eval_w2(sf: ScaleFunction, x, with_accuracy=False):
    """Second derivative; with ``with_accuracy`` also return its accuracy tag."""
    val = _scalar(sf.d2(x))
    return (val, sf.w2_accuracy) if with_accuracy else val


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

def _smooth(sigma):
    return "C2" if sigma > 0 else "C1"


def scale_brownian(sigma: float, drift: float, q: float) -> ScaleFunction:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if q < 0:
        raise ValueError("q must be >= 0")
    s2 = sigma * sigma
    delta = math.sqrt(drift * drift + 2 * q * s2) / s2
    omega = drift / s2
    k = 1.0 / (s2 * delta)
    rates = np.array([-omega + delta, -(omega + delta)])
    p = rates[0]
    return ScaleFunction(q=q, smoothness="C2", rates=rates, coefs=np.array([k, -k]),
                         phi_q=float(max(p, 0.0)), w_inf=k if p >= 0 else math.nan)


def cl_exponential_roots(c, lam, mu, q):
    """``(q+, q-)``: roots of ``c th^2 + (c mu - lam - q) th - q mu = 0``."""
    b = c * mu - lam - q
    disc = b * b + 4 * c * q * mu
    sq = math.sqrt(disc)
    # stable quadratic formula
    if b >= 0:
        r1 = (-b - sq) / (2 * c)
        r2 = (-q * mu) / (c * r1) if r1 != 0 else 0.0
    else:
        r2 = (-b + sq) / (2 * c)
        r1 = (-q * mu) / (c * r2)
    return max(r1, r2), min(r1, r2)


def scale_cl_exponential(c: float, lam: float, mu: float, q: float) -> ScaleFunction:
    if not (c > 0 and lam > 0 and mu > 0):
        raise ValueError("c, lam and mu must be positive")
    if q < 0:
        raise ValueError("q must be >= 0")
    if q == 0 and not c > lam / mu:
        raise ValueError("net-profit condition c > lam / mu is required when q = 0")
    qp, qm = cl_exponential_roots(c, lam, mu, q)
    if qp - qm <= 1e-12 * max(1.0, abs(qp)):
        raise SingularParameterError("q+ == q-: singular parameter set")
    a_plus = (mu + qp) / (qp - qm)
    a_minus = (mu + qm) / (qp - qm)
    model = LevyModel.cramer_lundberg(c, lam, GammaShape(1, mu)) if c > lam / mu else None
    w_inf = math.nan
    if model is not None:
        w_inf = 1.0 / laplace_exponent_prime(model, qp)
    return ScaleFunction(q=q, smoothness="C1", rates=np.array([qp, qm]),
                         coefs=np.array([a_plus / c, -a_minus / c]), phi_q=qp, w_inf=w_inf)


def _rational_numerator(model: LevyModel, q: float):
    """Polynomial ``(psi(th) - q) (mu + th)^k`` and the pole ``-mu``."""
    P = np.polynomial.Polynomial
    base = P([-q, model.drift, 0.5 * model.sigma ** 2])
    if model.jumps is None:
        return base
    dens = model.jumps.density
    if not isinstance(dens, GammaShape):
        raise ValueError("scale_rational needs an Exponential or GammaShape jump density")
    lam, mu, k = model.jumps.lam, dens.mu, dens.k
    factor = P([mu, 1.0]) ** k
    return (base - lam) * factor + lam * mu ** k


def scale_rational(model: LevyModel, q: float) -> ScaleFunction:
    """Partial-fraction expansion of ``1 / (psi - q)`` over the roots of ``psi = q``."""
    if q < 0:
        raise ValueError("q must be >= 0")
    poly = _rational_numerator(model, q).trim()
    roots = poly.roots()
    if np.any(np.abs(roots.imag) > 1e-9 * np.maximum(1.0, np.abs(roots.real))):
        raise ValueError("psi(theta) = q has complex roots; not supported")
    roots = np.sort(roots.real)[::-1]
    f = lambda t: laplace_exponent_ext(model, t) - q
    fp = lambda t: laplace_exponent_prime(model, t)
    polished = []
    for z in roots:
        for _ in range(3):
            d = fp(z)
            if d == 0:
                break
            z = z - f(z) / d
        polished.append(float(z))
    rates = np.array(polished)
    rates[0] = phi(model, q)
    gaps = np.abs(np.diff(rates))
    if gaps.size and np.min(gaps) < 1e-8 * max(1.0, np.max(np.abs(rates))):
        raise SingularParameterError("repeated root of psi(theta) = q; perturb q")
    coefs = 1.0 / np.array([laplace_exponent_prime(model, z) for z in rates])
    if np.any(rates[1:] >= rates[0]):
        raise ArithmeticError("root ordering failed")
    return ScaleFunction(q=q, smoothness=_smooth(model.sigma), rates=rates, coefs=coefs,
                         phi_q=float(rates[0]), w_inf=float(coefs[0]))


# --------------------------------------------------------------------------
# numerical inversion
# --------------------------------------------------------------------------

def _analytic_family(model: LevyModel):
    if model.jumps is None:
        return 0.0, 1.0, 1
    dens = model.jumps.density
    if isinstance(dens, GammaShape):
        return model.jumps.lam, dens.mu, dens.k
    return None


def scale_numeric(model: LevyModel, q: float, x_grid, nodes: int = 64,
                  backend=None, check: bool = True) -> ScaleFunction:
    """Grid W^(q) by inverting ``1 / (psi(s + Phi(q)) - q)`` and untilting.

    Brownian and Erlang-jump models use the extended-precision fixed-Talbot
    rule with ``nodes`` points.  Tabulated densities have compact support, so
    ``psi - q`` has infinitely many complex zeros near the imaginary axis that
    no Talbot contour encloses; those use Euler-summed Fourier series on a
    Bromwich line instead.  With ``check`` the Laplace identity is verified at ``Phi(q) + 1`` and :class:`InversionAccuracyError`
    raised above ``1e-6``.
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 4 or x[0] != 0 or np.any(np.diff(x) <= 0):
        raise ValueError("x_grid must be increasing, start at 0 and have >= 4 points")
    pq = phi(model, q)
    fam = _analytic_family(model)
    if fam is not None:
        lam, mu, k = fam
        tilted = talbot.invert_tilted_rational(model.sigma, model.drift, lam, mu, k,
                                               pq, q, x[1:], nodes=nodes, backend=backend)
    else:
        transform = lambda s: 1.0 / (laplace_exponent_ext(model, s + pq) - q)
        tilted = talbot.invert_euler(transform, x[1:])
    w0 = 0.0 if model.sigma > 0 else 1.0 / model.drift
    w = np.concatenate(([w0], tilted * np.exp(pq * x[1:])))
    w_inf = 1.0 / laplace_exponent_prime(model, pq)
    sf = ScaleFunction(q=q, smoothness=_smooth(model.sigma), x=x, w=w, phi_q=pq, w_inf=w_inf)
    if check:
        res = laplace_identity_residual(sf, model, pq + 1.0)
        if not res <= 1e-6:
            raise InversionAccuracyError(
                f"Laplace identity residual {res:.3e} > 1e-6; refine the grid or extend x_max")
    return sf


# --------------------------------------------------------------------------
# checks and output
# --------------------------------------------------------------------------

def laplace_identity_residual(sf: ScaleFunction, model: LevyModel, theta: float) -> float:
    """``|int_0^inf exp(-theta x) W(x) dx - 1 / (psi(theta) - q)|``.

    Mixtures integrate exactly.  Grids use the trapezoid rule with the
    endpoint-derivative correction, plus a tail made of ``W_inf exp(Phi(q) x)``
    and the leftover fitted as one exponential from ``W`` and ``W'`` at ``x_max``.
    """
    if not theta > sf.phi_q + 1e-3:
        raise ValueError("theta must exceed Phi(q) + 1e-3")
    target = 1.0 / (laplace_exponent(model, theta) - sf.q)
    if sf.is_mixture:
        integral = float(np.sum(sf.coefs / (theta - sf.rates)))
    else:
        x, h = sf.x, np.diff(sf.x)
        e = np.exp(-theta * x)
        f = e * sf.w
        f1 = e * (sf.w1 - theta * sf.w)
        integral = float(np.sum(0.5 * h * (f[:-1] + f[1:]) + h * h / 12.0 * (f1[:-1] - f1[1:])))
        xm, gap = x[-1], theta - sf.phi_q
        integral += sf.w_inf * math.exp(-gap * xm) / gap
        lead = sf.w_inf * math.exp(sf.phi_q * xm)
        rest, rest1 = sf.w[-1] - lead, sf.w1[-1] - sf.phi_q * lead
        if rest != 0:
            kappa = min(rest1 / rest, sf.phi_q)
            integral += rest * math.exp(-theta * xm) / (theta - kappa)
    return abs(integral - target)


def write_scale_csv(sf: ScaleFunction, x_grid, path) -> None:
    """CSV with columns ``x, W, W1, W2`` (17 significant digits)."""
    x = np.asarray(x_grid, dtype=float)
    x = x[x >= 0]
    rows = zip(x, sf(x), sf.d1(x), sf.d2(x))
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "W", "W1", "W2"])
        for r in rows:
            out.writerow([f"{v:.17g}" for v in r])
