# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels.  Semantics are defined by :mod:`definetti._fallback`."""
import numpy as np
cimport numpy as cnp

from . import _fallback
from libc.math cimport exp, log, sqrt, INFINITY
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal, random_standard_uniform, random_standard_exponential)

cnp.import_array()

cdef extern from "_talbot_q.h":
    void talbot_tilted_q(double sigma, double c, double lam, double mu, int k,
                         double shift, double q, const double *t, double *out,
                         long n, int nodes) nogil

cdef double SKIP = 40.0
cdef enum:
    K_HORIZON = 0
    K_RUIN = 1
    K_UP = 2
HORIZON, RUIN, UP = K_HORIZON, K_RUIN, K_UP


def talbot_tilted(double sigma, double c, double lam, double mu, int k,
                  double shift, double q, t, int nodes, dps=None):
    cdef cnp.ndarray[double, ndim=1] tt = np.ascontiguousarray(np.ravel(t), dtype=float)
    cdef cnp.ndarray[double, ndim=1] out = np.zeros_like(tt)
    cdef long n = tt.shape[0]
    with nogil:
        talbot_tilted_q(sigma, c, lam, mu, k, shift, q, &tt[0] if n else NULL,
                        &out[0] if n else NULL, n, nodes)
    return out.reshape(np.shape(t))


def jump_integrals(w, e, v):
    # numpy's vectorised convolution beats a scalar double loop here
    return _fallback.jump_integrals(np.asarray(w), np.asarray(e), np.asarray(v))


def evaluate_policy(cnp.uint8_t[::1] pay, double[::1] w, double[::1] e,
                    double a_up, double a_dn, double a_0, double lam,
                    double h, bint dirichlet0):
    cdef Py_ssize_t n = pay.shape[0], i, j, m, start, p
    cdef double ja, jb, a_prev, b_prev, ca, cb, s
    out = np.zeros(n)
    al = np.zeros(n)
    be = np.zeros(n)
    cdef double[::1] v = out
    cdef double[::1] alpha = al
    cdef double[::1] beta = be
    with nogil:
        i = 1 if dirichlet0 else 0
        while i < n:
            if pay[i]:
                v[i] = v[i - 1] + h
                i += 1
                continue
            start = i
            for p in range(start):
                beta[p] = v[p]
                alpha[p] = 0.0
            alpha[start] = 1.0
            beta[start] = 0.0
            j = start
            while True:
                ja = 0.0
                jb = 0.0
                if j > 0:
                    for m in range(j):
                        ja = ja + w[m] * alpha[j - m]
                        jb = jb + w[m] * beta[j - m]
                    ja = ja + e[j] * alpha[0]
                    jb = jb + e[j] * beta[0]
                    a_prev = alpha[j - 1]
                    b_prev = beta[j - 1]
                else:
                    a_prev = 0.0
                    b_prev = 0.0
                if pay[j + 1]:
                    ca = (a_up + a_0) * alpha[j] + a_dn * a_prev + lam * ja
                    cb = (a_up + a_0) * beta[j] + a_up * h + a_dn * b_prev + lam * jb
                    s = -cb / ca
                    for p in range(start, j + 1):
                        v[p] = alpha[p] * s + beta[p]
                        alpha[p] = 0.0
                    i = j + 1
                    break
                alpha[j + 1] = -(a_0 * alpha[j] + a_dn * a_prev + lam * ja) / a_up
                beta[j + 1] = -(a_0 * beta[j] + a_dn * b_prev + lam * jb) / a_up
                j += 1
    return out


cdef inline Py_ssize_t _band_index(double u, double[::1] a) nogil:
    cdef Py_ssize_t j
    for j in range(a.shape[0]):
        if u <= a[j]:
            return j
    return a.shape[0] - 1


cdef inline double _lump(double u, double[::1] b, double[::1] a, double *paid) nogil:
    cdef Py_ssize_t nb = a.shape[0], j
    paid[0] = 0.0
    if nb == 0:
        return u
    if u > a[nb - 1]:
        paid[0] = u - a[nb - 1]
        return a[nb - 1]
    for j in range(nb - 1):
        if a[j] < u < b[j + 1]:
            paid[0] = u - a[j]
            return a[j]
    return u


cdef inline double _pay_integral(double c, double t1, double t2, double q) nogil:
    if q > 0:
        return c * (exp(-q * t1) - exp(-q * t2)) / q
    return c * (t2 - t1)


def simulate_path(bitgen, double sigma, double c, double lam, int k, double mu,
                  double x0, double T, double dt, double q,
                  double[::1] bands_b, double[::1] bands_a, bint kill, double up):
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")
    cdef Py_ssize_t nb = bands_a.shape[0], j, r
    cdef double t = 0.0, u, paid, div, next_jump, end, top, t_hit, t_up
    cdef double d, s2d, x1, tmid, m, over, lower, drop, size
    cdef int kind = K_HORIZON
    cdef double ret_t = 0.0, ret_x = 0.0, ret_disc = 0.0
    with bitgen.lock, nogil:
        u = _lump(x0, bands_b, bands_a, &paid)
        div = paid
        if lam > 0:
            next_jump = random_standard_exponential(rng) / lam
        else:
            next_jump = INFINITY
        while True:
            if u >= up:
                kind = K_UP; ret_t = t; ret_x = u; ret_disc = exp(-q * t)
                break
            if sigma == 0.0:
                end = next_jump if next_jump < T else T
                if up < INFINITY and u + c * (end - t) >= up:
                    t_up = t + (up - u) / c
                    kind = K_UP; ret_t = t_up; ret_x = up; ret_disc = exp(-q * t_up)
                    break
                top = bands_a[_band_index(u, bands_a)] if nb else INFINITY
                if u + c * (end - t) >= top:
                    t_hit = t + (top - u) / c
                    div += _pay_integral(c, t_hit, end, q)
                    u = top
                else:
                    u += c * (end - t)
                t = end
            else:
                end = t + dt
                if next_jump < end:
                    end = next_jump
                if T < end:
                    end = T
                d = end - t
                s2d = sigma * sigma * d
                x1 = u + c * d + sigma * sqrt(d) * random_standard_normal(rng)
                tmid = t + 0.5 * d
                if up < INFINITY and (x1 >= up or 2.0 * (up - u) * (up - x1) < SKIP * s2d):
                    m = 0.5 * (u + x1 + sqrt((x1 - u) * (x1 - u)
                                             - 2.0 * s2d * log(1.0 - random_standard_uniform(rng))))
                    if m >= up:
                        kind = K_UP; ret_t = tmid; ret_x = up; ret_disc = exp(-q * tmid)
                        break
                j = 0
                if nb:
                    j = _band_index(u, bands_a)
                    top = bands_a[j]
                    if x1 >= top or 2.0 * (top - u) * (top - x1) < SKIP * s2d:
                        m = 0.5 * (u + x1 + sqrt((x1 - u) * (x1 - u)
                                                 - 2.0 * s2d * log(1.0 - random_standard_uniform(rng))))
                        if m > top:
                            over = m - top
                            x1 -= over
                            div += exp(-q * tmid) * over
                if j > 0:
                    lower = bands_b[j]
                elif kill:
                    lower = 0.0
                else:
                    lower = -INFINITY
                if lower > -INFINITY and (x1 < lower or 2.0 * (u - lower) * (x1 - lower) < SKIP * s2d):
                    m = 0.5 * (u + x1 - sqrt((x1 - u) * (x1 - u)
                                             - 2.0 * s2d * log(1.0 - random_standard_uniform(rng))))
                    if m < lower:
                        if j == 0:
                            kind = K_RUIN; ret_t = tmid; ret_x = x1; ret_disc = 0.0
                            break
                        drop = lower - bands_a[j - 1]
                        x1 -= drop
                        div += exp(-q * tmid) * drop
                        if x1 > bands_a[j - 1]:
                            div += exp(-q * tmid) * (x1 - bands_a[j - 1])
                            x1 = bands_a[j - 1]
                u = x1
                t = end
            if t >= T:
                kind = K_HORIZON; ret_t = t; ret_x = u; ret_disc = 0.0
                break
            if t >= next_jump:
                size = 0.0
                for r in range(k):
                    size += random_standard_exponential(rng)
                u -= size / mu
                if kill and u < 0.0:
                    kind = K_RUIN; ret_t = t; ret_x = u; ret_disc = 0.0
                    break
                u = _lump(u, bands_b, bands_a, &paid)
                if paid > 0.0:
                    div += exp(-q * t) * paid
                next_jump = t + random_standard_exponential(rng) / lam
    return div, ret_t, kind, ret_x, ret_disc
