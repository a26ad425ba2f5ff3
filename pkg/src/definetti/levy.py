"""Spectrally negative Lévy models with compound-Poisson jump parts.

The surplus is ``X_t = x + sigma B_t + c t - sum_{k<=N_t} C_k`` with a single
premium rate ``c`` (the uncompensated form).  Jump magnitudes ``C_k`` are
positive and their density is one of :class:`Exponential`,
:class:`GammaShape` or :class:`Tabulated`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import gammainc, gammaln

_ROOT_TOL = 1e-14


# --------------------------------------------------------------------------
# jump densities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaShape:
    """Erlang density ``mu^k y^(k-1) e^(-mu y) / (k-1)!`` on ``y > 0``."""

    k: int
    mu: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"shape k must be a positive integer, got {self.k}")
        if not self.mu > 0:
            raise ValueError(f"rate mu must be positive, got {self.mu}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def mean(self) -> float:
        return self.k / self.mu

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        pos = y > 0
        yp = y[pos]
        out[pos] = np.exp(self.k * math.log(self.mu) + (self.k - 1) * np.log(yp)
                          - self.mu * yp - gammaln(self.k))
        if self.k == 1:
            out[y == 0] = self.mu
        return out

    def cdf(self, y):
        return gammainc(self.k, self.mu * np.maximum(np.asarray(y, dtype=float), 0.0))

    def partial_mean(self, y):
        """``int_0^y s rho(s) ds``."""
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return self.mean * gammainc(self.k + 1, self.mu * y)

    def laplace(self, theta):
        """``E exp(-theta C)``; accepts complex arrays."""
        return (self.mu / (self.mu + theta)) ** self.k

    def laplace_prime(self, theta):
        return -self.k / (self.mu + theta) * self.laplace(theta)


class Exponential(GammaShape):
    """Exponential density with rate ``mu`` (the ``k = 1`` Erlang law)."""

    def __init__(self, mu: float):
        super().__init__(1, mu)

    def __repr__(self):
        return f"Exponential(mu={self.mu!r})"


def _g1(z):
    """``(1 - exp(-z)) / z`` for complex or real arrays, stable near 0."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-3
    out = np.empty(z.shape, dtype=np.result_type(z, float))
    zs = z[small]
    out[small] = 1 - zs / 2 + zs * zs / 6 - zs ** 3 / 24
    zl = z[~small]
    out[~small] = (1 - np.exp(-zl)) / zl
    return out


def _g2(z):
    """``(1 - exp(-z)(1 + z)) / z**2``, i.e. ``int_0^1 u exp(-z u) du``."""
    z = np.asarray(z)
    small = np.abs(z) < 0.25
    out = np.empty(z.shape, dtype=np.result_type(z, float))
    zs = z[small]
    acc = np.zeros_like(zs)
    term = np.ones_like(zs)
    # sum_{n>=0} (-z)^n / (n! (n + 2))
    for n in range(0, 18):
        acc = acc + term / (n + 2)
        term = term * (-zs) / (n + 1)
    out[small] = acc
    zl = z[~small]
    out[~small] = (1 - np.exp(-zl) * (1 + zl)) / (zl * zl)
    return out


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-linear density through ``(grid, values)``, zero elsewhere.

    The table must integrate to one within ``1e-10``;
    :meth:`from_function` builds a normalised table from a callable.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("grid and values must be 1-d arrays of equal length >= 2")
        if grid[0] < 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing and start at y >= 0")
        if np.any(values < 0):
            raise ValueError("density values must be nonnegative")
        mass = np.trapezoid(values, grid)
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"tabulated density integrates to {mass!r}, not 1")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        widths = np.diff(grid)
        cell_mass = 0.5 * widths * (values[:-1] + values[1:])
        # int s l(s) ds over each cell for linear l
        cell_moment = widths / 6.0 * (values[:-1] * (2 * grid[:-1] + grid[1:])
                                      + values[1:] * (grid[:-1] + 2 * grid[1:]))
        object.__setattr__(self, "_cum_mass", np.concatenate(([0.0], np.cumsum(cell_mass))))
        object.__setattr__(self, "_cum_moment", np.concatenate(([0.0], np.cumsum(cell_moment))))

    @classmethod
    def from_function(cls, f, grid) -> "Tabulated":
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(f(grid), dtype=float)
        return cls(grid, values / np.trapezoid(values, grid))

    @property
    def mean(self) -> float:
        return float(self._cum_moment[-1])

    def pdf(self, y):
        return np.interp(y, self.grid, self.values, left=0.0, right=0.0)

    def _locate(self, y):
        y = np.clip(np.asarray(y, dtype=float), self.grid[0], self.grid[-1])
        j = np.clip(np.searchsorted(self.grid, y, side="right") - 1, 0, self.grid.size - 2)
        return y, j

    def cdf(self, y):
        y, j = self._locate(y)
        y0 = self.grid[j]
        f0 = self.values[j]
        slope = (self.values[j + 1] - f0) / (self.grid[j + 1] - y0)
        u = y - y0
        return self._cum_mass[j] + f0 * u + 0.5 * slope * u * u

    def partial_mean(self, y):
        y, j = self._locate(y)
        y0 = self.grid[j]
        f0 = self.values[j]
        slope = (self.values[j + 1] - f0) / (self.grid[j + 1] - y0)
        u = y - y0
        # int_0^u (y0 + t)(f0 + slope t) dt
        part = y0 * f0 * u + (y0 * slope + f0) * u * u / 2 + slope * u ** 3 / 3
        return self._cum_moment[j] + part

    def laplace(self, theta):
        """Exact transform of the piecewise-linear table (complex-safe)."""
        theta = np.asarray(theta)
        shape = theta.shape
        th = theta.reshape(-1, 1)
        y0 = self.grid[:-1]
        h = np.diff(self.grid)
        v0 = self.values[:-1]
        dv = np.diff(self.values)
        out = np.empty(th.shape[0], dtype=np.result_type(th, float))
        # away from the origin integrate by parts twice: one exponential per node
        far = np.abs(th[:, 0]) >= 1.0
        slope = dv / h
        kink = np.diff(slope, prepend=0.0, append=0.0)
        step = max(1, 2_000_000 // h.size)  # bound the work array
        for idx in (np.flatnonzero(~far), np.flatnonzero(far)):
            for i in range(0, idx.size, step):
                rows = idx[i:i + step]
                t = th[rows]
                if far[rows[0]]:
                    e = np.exp(-t * self.grid)
                    tt = t[:, 0]
                    out[rows] = ((self.values[0] - self.values[-1] * e[:, -1]) / tt
                                 + (e @ kink) / (tt * tt))
                else:
                    z = t * h
                    out[rows] = (h * np.exp(-t * y0) * (v0 * _g1(z) + dv * _g2(z))).sum(axis=1)
        return out.reshape(shape) if shape else out[0]

    def laplace_prime(self, theta):
        theta = np.asarray(theta)
        shape = theta.shape
        th = theta.reshape(-1, 1)
        h = np.diff(self.grid)
        mid = 0.5 * (self.grid[:-1] + self.grid[1:])
        # moment-weighted transform by 16-point Gauss rule per cell
        nodes, weights = np.polynomial.legendre.leggauss(16)
        ys = mid[:, None] + 0.5 * h[:, None] * nodes[None, :]
        dens = self.pdf(ys)
        w = 0.5 * h[:, None] * weights[None, :]
        wyd = (w * ys * dens).ravel()
        ys = ys.ravel()
        out = np.empty(th.shape[0], dtype=np.result_type(th, float))
        step = max(1, 2_000_000 // ys.size)
        for i in range(0, th.shape[0], step):
            out[i:i + step] = -(wyd * np.exp(-th[i:i + step] * ys)).sum(axis=1)
        return out.reshape(shape) if shape else out[0]


JumpDensity = Union[GammaShape, Exponential, Tabulated]


@dataclass(frozen=True)
class CompoundPoisson:
    """Downward jumps arriving at rate ``lam`` with magnitude density ``density``."""

    lam: float
    density: JumpDensity

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"arrival intensity must be positive, got {self.lam}")


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyModel:
    """Lévy triple: Brownian coefficient, premium rate and jump measure."""

    sigma: float = 0.0
    drift: float = 0.0
    jumps: Optional[CompoundPoisson] = None

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.sigma == 0 and self.jumps is None and self.drift == 0:
            raise ValueError("degenerate model: no diffusion, drift or jumps")
        m = mean_x1(self)
        if not m > 0:
            raise ValueError(f"net-profit condition violated: E X_1 = {m!r} <= 0")

    @property
    def lam(self) -> float:
        return self.jumps.lam if self.jumps is not None else 0.0

    @property
    def density(self) -> Optional[JumpDensity]:
        return self.jumps.density if self.jumps is not None else None

    @property
    def bounded_variation(self) -> bool:
        return self.sigma == 0

    @classmethod
    def brownian(cls, sigma: float, drift: float) -> "LevyModel":
        return cls(sigma=sigma, drift=drift)

    @classmethod
    def cramer_lundberg(cls, c: float, lam: float, density: JumpDensity,
                        sigma: float = 0.0) -> "LevyModel":
        return cls(sigma=sigma, drift=c, jumps=CompoundPoisson(lam, density))


def _psi(model: LevyModel, theta):
    val = 0.5 * model.sigma ** 2 * theta * theta + model.drift * theta
    if model.jumps is not None:
        val = val + model.jumps.lam * (model.jumps.density.laplace(theta) - 1.0)
    return val


def laplace_exponent(model: LevyModel, theta):
    """``psi(theta) = log E exp(theta (X_1 - X_0))`` for ``theta >= 0``.

    Complex or negative arguments are accepted only through
    :func:`laplace_exponent_ext`, which skips the domain check.
    """
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0):
        raise ValueError("laplace_exponent is defined here for theta >= 0")
    out = _psi(model, th)
    return float(out) if np.ndim(out) == 0 else out


def laplace_exponent_ext(model: LevyModel, theta):
    """Analytic continuation of psi (complex arguments, no domain check)."""
    return _psi(model, theta)


def laplace_exponent_prime(model: LevyModel, theta):
    theta = np.asarray(theta)
    val = model.sigma ** 2 * theta + model.drift
    if model.jumps is not None:
        val = val + model.jumps.lam * model.jumps.density.laplace_prime(theta)
    return float(val) if np.ndim(val) == 0 else val


def mean_x1(model: LevyModel) -> float:
    """``E X_1 = psi'(0+) = c - lam E C_1``."""
    m = model.drift
    if model.jumps is not None:
        m -= model.jumps.lam * model.jumps.density.mean
    return float(m)


def phi(model: LevyModel, q: float) -> float:
    """Right inverse of psi: the largest root of ``psi(theta) = q``."""
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    if q == 0:
        return 0.0
    return _largest_root(lambda t: _psi(model, t) - q,
                         lambda t: laplace_exponent_prime(model, t))


def _largest_root(f, fprime, lo=0.0):
    """Root of an increasing convex ``f`` on ``(lo, inf)`` with ``f(lo) < 0``."""
    hi = max(1.0, 2 * lo)
    while f(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("could not bracket the root")
    x = hi
    for _ in range(200):
        fx = f(x)
        if fx > 0:
            hi = x
        else:
            lo = x
        d = fprime(x)
        step_ok = d > 0
        if step_ok:
            xn = x - fx / d
            step_ok = lo < xn < hi
        if not step_ok:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= _ROOT_TOL or hi - lo <= _ROOT_TOL:
            x = xn
            break
        x = xn
    # final Newton polish: convexity keeps it on the right side of the root
    for _ in range(2):
        d = fprime(x)
        if d > 0:
            x = x - f(x) / d
    return float(x)


# --------------------------------------------------------------------------
# log-convexity
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LogConvexity:
    log_convex: bool
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.log_convex


def log_convexity_certificate(density: JumpDensity, grid, tol: float = 1e-12) -> LogConvexity:
    """Discrete convexity test of ``log density`` on consecutive grid triples.

    Returns a falsy :class:`LogConvexity` carrying the first violating
    triple when the middle point lies above the chord by more than ``tol``.
    """
    x = np.asarray(grid, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 grid points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    vals = density.pdf(x)
    if np.any(vals <= 0):
        raise ValueError("density must be strictly positive on the grid")
    f = np.log(vals)
    x0, x1, x2 = x[:-2], x[1:-1], x[2:]
    chord = ((x2 - x1) * f[:-2] + (x1 - x0) * f[2:]) / (x2 - x0)
    excess = f[1:-1] - chord
    bad = np.nonzero(excess > tol)[0]
    if bad.size:
        i = int(bad[0])
        return LogConvexity(False, (float(x0[i]), float(x1[i]), float(x2[i])))
    return LogConvexity(True)


def tail_rate(model: LevyModel, y: float) -> float:
    """Unique positive root of ``psi(theta) = theta * y`` (requires ``y > E X_1``)."""
    m = mean_x1(model)
    if not y > m:
        raise ValueError(f"need y > E X_1 = {m!r}, got {y!r}")
    f = lambda t: _psi(model, t) - t * y
    fp = lambda t: laplace_exponent_prime(model, t) - y
    # f'(0) = m - y < 0, so f < 0 just right of 0; start the bracket there
    lo = 0.0
    probe = 1e-8
    while f(probe) >= 0 and probe > 1e-300:
        probe *= 0.5
    lo = probe
    return _largest_root(f, fp, lo=lo)
