"""Pure-Python kernels; the reference semantics for :mod:`definetti._core`.

Every function here has a compiled twin with the same signature.  Random
draws are taken in the same order from the same bit generator, so the two
backends agree to the last bit on the Monte Carlo kernels.
"""
import math

import mpmath
import numpy as np

HORIZON, RUIN, UP = 0, 1, 2
_SKIP = 40.0  # bridge crossing probabilities below exp(-_SKIP) are ignored


# --------------------------------------------------------------------------
# fixed-Talbot inversion of the tilted scale-function transform
# --------------------------------------------------------------------------

def talbot_tilted(sigma, c, lam, mu, k, shift, q, t, nodes, dps=40):
    """Invert ``1 / (psi(s + shift) - q)`` at each ``t > 0`` (mpmath route)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    with mpmath.workdps(dps):
        ms, mc, ml, mm = (mpmath.mpf(v) for v in (sigma, c, lam, mu))
        msh, mq = mpmath.mpf(shift), mpmath.mpf(q)
        half_s2 = ms * ms / 2

        def f(s):
            th = s + msh
            v = half_s2 * th * th + mc * th - mq
            if lam > 0:
                v += ml * ((mm / (mm + th)) ** k - 1)
            return 1 / v

        angles = [j * mpmath.pi / nodes for j in range(1, nodes)]
        cots = [mpmath.cot(a) for a in angles]
        sigmas = [a + (a * ct - 1) * ct for a, ct in zip(angles, cots)]
        for i, ti in np.ndenumerate(t):
            if not ti > 0:
                continue
            tm = mpmath.mpf(float(ti))
            r = 2 * mpmath.mpf(nodes) / (5 * tm)
            acc = mpmath.exp(r * tm) * f(r).real / 2
            for a, ct, sg in zip(angles, cots, sigmas):
                s = r * a * mpmath.mpc(ct, 1)
                acc += (mpmath.exp(tm * s) * f(s) * mpmath.mpc(1, sg)).real
            out[i] = float(r / nodes * acc)
    return out


# --------------------------------------------------------------------------
# HJB policy evaluation
# --------------------------------------------------------------------------

def jump_integrals(w, e, v):
    """``J_i = sum_{m<i} w_m v_{i-m} + e_i v_0`` (``J_0 = 0``)."""
    n = v.shape[0]
    full = np.convolve(w[:n], v)[:n]
    out = full - w[:n] * v[0] + e[:n] * v[0]
    out[0] = 0.0
    return out


def evaluate_policy(pay, w, e, a_up, a_dn, a_0, lam, h, dirichlet0):
    """Value of a stationary policy on the grid.

    ``pay[i]`` selects the lump action ``v_i = v_{i-1} + h``; other nodes obey
    ``a_up v_{i+1} + a_0 v_i + a_dn v_{i-1} + lam J_i = 0``.  Each maximal run
    of continuation nodes carries one free value fixed by the row at its top.
    """
    n = pay.shape[0]
    v = np.zeros(n)
    alpha = np.zeros(n)
    beta = np.zeros(n)
    i = 1 if dirichlet0 else 0
    while i < n:
        if pay[i]:
            v[i] = v[i - 1] + h
            i += 1
            continue
        start = i
        beta[:start] = v[:start]
        alpha[:] = 0.0
        alpha[start] = 1.0
        beta[start] = 0.0
        j = start
        while True:
            ww = w[:j][::-1]  # ww[p] multiplies node p + 1 for p < j
            ja = ww @ alpha[1:j + 1] + e[j] * alpha[0] if j > 0 else 0.0
            jb = ww @ beta[1:j + 1] + e[j] * beta[0] if j > 0 else 0.0
            a_prev = alpha[j - 1] if j > 0 else 0.0
            b_prev = beta[j - 1] if j > 0 else 0.0
            if pay[j + 1]:
                ca = (a_up + a_0) * alpha[j] + a_dn * a_prev + lam * ja
                cb = (a_up + a_0) * beta[j] + a_up * h + a_dn * b_prev + lam * jb
                s = -cb / ca
                v[start:j + 1] = alpha[start:j + 1] * s + beta[start:j + 1]
                i = j + 1
                break
            alpha[j + 1] = -(a_0 * alpha[j] + a_dn * a_prev + lam * ja) / a_up
            beta[j + 1] = -(a_0 * beta[j] + a_dn * b_prev + lam * jb) / a_up
            j += 1
    return v


# --------------------------------------------------------------------------
# Monte Carlo path kernel
# --------------------------------------------------------------------------

def _band_index(u, bands_a):
    for j in range(bands_a.shape[0]):
        if u <= bands_a[j]:
            return j
    return bands_a.shape[0] - 1


def _lump(u, bands_b, bands_a):
    nb = bands_a.shape[0]
    if nb == 0:
        return u, 0.0
    if u > bands_a[nb - 1]:
        return bands_a[nb - 1], u - bands_a[nb - 1]
    for j in range(nb - 1):
        if bands_a[j] < u < bands_b[j + 1]:
            return bands_a[j], u - bands_a[j]
    return u, 0.0


def _pay_integral(c, t1, t2, q):
    if q > 0:
        return c * (math.exp(-q * t1) - math.exp(-q * t2)) / q
    return c * (t2 - t1)


def simulate_path(bitgen, sigma, c, lam, k, mu, x0, T, dt, q,
                  bands_b, bands_a, kill, up, trace=None):
    """One path of the (regulated) surplus.

    Returns ``(dividends, stop_time, stop_kind, x_end, up_discount)`` where
    ``stop_kind`` is HORIZON, RUIN or UP and ``up_discount = exp(-q tau)``
    when the path passed ``up``.  A ``trace`` list, when given, receives one
    ``(kind, time, amount, level_before, level_after)`` tuple per payout
    (reference kernel only); for continuous payout at a barrier ``amount`` is
    the payout rate.
    """
    g = np.random.Generator(bitgen)
    nb = bands_a.shape[0]
    t = 0.0
    u, paid = _lump(x0, bands_b, bands_a)
    div = paid
    if trace is not None and paid > 0.0:
        trace.append(("lump", 0.0, paid, x0, u))
    next_jump = g.standard_exponential() / lam if lam > 0 else math.inf
    while True:
        if u >= up:
            return div, t, UP, u, math.exp(-q * t)
        if sigma == 0.0:
            end = min(next_jump, T)
            if up < math.inf and u + c * (end - t) >= up:
                t_up = t + (up - u) / c
                return div, t_up, UP, up, math.exp(-q * t_up)
            top = bands_a[_band_index(u, bands_a)] if nb else math.inf
            if u + c * (end - t) >= top:
                t_hit = t + (top - u) / c
                div += _pay_integral(c, t_hit, end, q)
                if trace is not None and end > t_hit:
                    trace.append(("rate", t_hit, c, top, top))
                u = top
            else:
                u += c * (end - t)
            t = end
        else:
            end = min(t + dt, next_jump, T)
            d = end - t
            s2d = sigma * sigma * d
            x1 = u + c * d + sigma * math.sqrt(d) * g.standard_normal()
            tmid = t + 0.5 * d
            if up < math.inf and (x1 >= up or 2.0 * (up - u) * (up - x1) < _SKIP * s2d):
                m = 0.5 * (u + x1 + math.sqrt((x1 - u) * (x1 - u)
                                              - 2.0 * s2d * math.log(1.0 - g.random())))
                if m >= up:
                    return div, tmid, UP, up, math.exp(-q * tmid)
            j = 0
            if nb:
                j = _band_index(u, bands_a)
                top = bands_a[j]
                if x1 >= top or 2.0 * (top - u) * (top - x1) < _SKIP * s2d:
                    m = 0.5 * (u + x1 + math.sqrt((x1 - u) * (x1 - u)
                                                  - 2.0 * s2d * math.log(1.0 - g.random())))
                    if m > top:
                        over = m - top
                        if trace is not None:
                            trace.append(("reflect", tmid, over, m, top))
                        x1 -= over
                        div += math.exp(-q * tmid) * over
            if j > 0:
                lower = bands_b[j]
            elif kill:
                lower = 0.0
            else:
                lower = -math.inf
            if lower > -math.inf and (x1 < lower or 2.0 * (u - lower) * (x1 - lower) < _SKIP * s2d):
                m = 0.5 * (u + x1 - math.sqrt((x1 - u) * (x1 - u)
                                              - 2.0 * s2d * math.log(1.0 - g.random())))
                if m < lower:
                    if j == 0:
                        return div, tmid, RUIN, x1, 0.0
                    drop = lower - bands_a[j - 1]
                    if trace is not None:
                        trace.append(("lump", tmid, drop, lower, bands_a[j - 1]))
                    x1 -= drop
                    div += math.exp(-q * tmid) * drop
                    if x1 > bands_a[j - 1]:
                        if trace is not None:
                            trace.append(("lump", tmid, x1 - bands_a[j - 1], x1, bands_a[j - 1]))
                        div += math.exp(-q * tmid) * (x1 - bands_a[j - 1])
                        x1 = bands_a[j - 1]
            u = x1
            t = end
        if t >= T:
            return div, t, HORIZON, u, 0.0
        if t >= next_jump:
            size = 0.0
            for _ in range(k):
                size += g.standard_exponential()
            u -= size / mu
            if kill and u < 0.0:
                return div, t, RUIN, u, 0.0
            before = u
            u, paid = _lump(u, bands_b, bands_a)
            if paid > 0.0:
                div += math.exp(-q * t) * paid
                if trace is not None:
                    trace.append(("lump", t, paid, before, u))
            next_jump = t + g.standard_exponential() / lam
