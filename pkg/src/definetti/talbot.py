"""Fixed-Talbot numerical Laplace inversion (Abate-Valkó contour).

The contour ``s(a) = r a (cot a + i)`` with ``r = 2M / (5t)`` amplifies
rounding by roughly ``exp(2M/5)``, so the default 64-node rule is run in
extended precision: quad precision in the compiled core, mpmath otherwise.
:func:`invert` is the double-precision variant for arbitrary transforms; keep
``nodes`` at or below about 24 there.

:func:`invert_euler` (Abate-Whitt Fourier series on a Bromwich line with
binomial averaging) is for transforms with singularities scattered through the
left half-plane, where the Talbot contour cannot enclose them all.
"""
import numpy as np
from scipy.special import comb

from . import _backend


def invert(transform, t, nodes=24):
    """Invert a vectorised complex transform ``F(s)`` at ``t > 0`` (double precision)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros(t.shape)
    pos = t > 0
    tp = t[pos][:, None]
    a = np.arange(1, nodes) * np.pi / nodes
    cot = 1.0 / np.tan(a)
    r = 2.0 * nodes / (5.0 * tp)
    s = r * a * (cot + 1j)
    sig = a + (a * cot - 1.0) * cot
    vals = transform(s)
    terms = (np.exp(tp * s) * vals * (1.0 + 1j * sig)).real
    head = 0.5 * np.exp(r[:, 0] * tp[:, 0]) * np.real(transform(r[:, 0] + 0j))
    out[pos] = r[:, 0] / nodes * (head + terms.sum(axis=1))
    return out


def invert_euler(transform, t, A=18.4, n=15, m=11):
    """Euler-summed Fourier series inversion at ``t > 0``.

    Discretisation error is about ``exp(-A)`` times the size of ``f``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros(t.shape)
    pos = t > 0
    tp = t[pos][:, None]
    k = np.arange(n + m + 1)
    s = (A + 2j * np.pi * k) / (2.0 * tp)
    terms = np.real(transform(s)) * (-1.0) ** k
    terms[:, 0] *= 0.5
    partial = np.cumsum(terms, axis=1)[:, n:]
    avg = partial @ (comb(m, np.arange(m + 1)) / 2.0 ** m)
    out[pos] = np.exp(A / 2) / tp[:, 0] * avg
    return out


def invert_tilted_rational(sigma, c, lam, mu, k, shift, q, t, nodes=64, backend=None):
    """Invert ``1 / (psi(s + shift) - q)`` for Brownian plus Erlang-jump exponents.

    ``backend`` is a kernel module from :func:`definetti._backend.available`;
    the import-time default is used when omitted.
    """
    kern = backend if backend is not None else _backend.kernels
    t = np.asarray(t, dtype=float)
    return kern.talbot_tilted(float(sigma), float(c), float(lam), float(mu), int(k),
                              float(shift), float(q), t, int(nodes))
