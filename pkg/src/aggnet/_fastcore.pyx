# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled evaluator for the packed log posterior.

Scalar C twin of :mod:`aggnet._slowcore`: identical formulas, clamps, and
branch thresholds, including the rising-factorial escape hatch for huge
matched concentrations.  The test suite holds both backends and the
readable reference implementation together to ~1e-10.
"""

from libc.math cimport INFINITY, M_PI, exp, expm1, isfinite, lgamma, log, log1p, sqrt

import numpy as np

cdef double _EPS = 1e-9
cdef double _PHI_SWITCH = 1e6
cdef double _SIZE_SWITCH = 1e7
cdef double _PHI_FLOOR = 1e-12
cdef double _LOG_2PI = log(2.0 * M_PI)


cdef double _log_rising(double a, long k) nogil:
    # log of a (a+1) ... (a+k-1); exact where lgamma differences cancel
    cdef double total = k * log(a)
    cdef long j
    for j in range(1, k):
        total += log1p(j / a)
    return total


cdef double _bb_log_pmf(double y, double t, double alpha, double beta) nogil:
    cdef double choose = (lgamma(t + 1.0) - lgamma(y + 1.0)
                          - lgamma(t - y + 1.0))
    cdef double phi = alpha + beta
    cdef double core
    if phi > _PHI_SWITCH:
        core = (_log_rising(alpha, <long> (y + 0.5))
                + _log_rising(beta, <long> (t - y + 0.5))
                - _log_rising(phi, <long> (t + 0.5)))
    else:
        core = (lgamma(y + alpha) - lgamma(alpha)
                + lgamma(t - y + beta) - lgamma(beta)
                - lgamma(t + phi) + lgamma(phi))
    return choose + core


cdef double _entry_binary(double y, double t, double mean, double var) nogil:
    cdef double rho, f, fm1, phi
    if t == 0.0 or mean <= 0.0:
        return 0.0 if y == 0.0 else -INFINITY
    if mean >= t:
        return 0.0 if y == t else -INFINITY
    rho = mean / t
    f = var / (t * rho * (1.0 - rho))
    fm1 = f - 1.0
    if fm1 < _EPS:
        fm1 = _EPS
    phi = (t - f) / fm1
    if phi < _PHI_FLOOR:
        phi = _PHI_FLOOR
    return _bb_log_pmf(y, t, rho * phi, (1.0 - rho) * phi)


cdef double _entry_weighted(double y, double mean, double var) nogil:
    cdef double excess, size, rising
    if mean <= 0.0:
        return 0.0 if y == 0.0 else -INFINITY
    excess = var - mean
    if excess < _EPS:
        excess = _EPS
    size = mean * mean / excess
    if size > _SIZE_SWITCH:
        rising = _log_rising(size, <long> (y + 0.5))
    else:
        rising = lgamma(y + size) - lgamma(size)
    return (rising - lgamma(y + 1.0)
            - size * log1p(excess / mean)
            + y * (log(excess) - log(mean + excess)))


cdef class Evaluator:
    """Log posterior of the cluster model on packed coordinate vectors."""

    cdef long r, q, n_free, dim
    cdef long nu_off, eta_off, lt_off, th_off
    cdef bint directed, weighted
    cdef double cs_sigma, cs_tau, hc_norm_s, hc_norm_t
    cdef double[:, ::1] counts
    cdef double[:, ::1] trials
    cdef double[::1] nsize
    cdef long[::1] free_rows
    cdef long[::1] free_cols
    cdef double[:, ::1] mu
    cdef double[::1] sig2

    def __init__(self, counts, sizes, directed, weighted, q,
                 free_rows, free_cols, cauchy_scale_sigma, cauchy_scale_tau):
        sizes = np.asarray(sizes, dtype=np.int64)
        self.r = sizes.shape[0]
        self.q = q
        self.directed = directed
        self.weighted = weighted
        self.counts = np.ascontiguousarray(counts, dtype=np.float64)
        trials = np.outer(sizes, sizes)
        if directed:
            np.fill_diagonal(trials, sizes * (sizes - 1))
        else:
            np.fill_diagonal(trials, sizes * (sizes - 1) // 2)
        self.trials = np.ascontiguousarray(trials, dtype=np.float64)
        self.nsize = np.ascontiguousarray(sizes, dtype=np.float64)
        self.free_rows = np.ascontiguousarray(free_rows, dtype=np.int64)
        self.free_cols = np.ascontiguousarray(free_cols, dtype=np.int64)
        self.n_free = self.free_rows.shape[0]
        self.nu_off = self.n_free
        self.eta_off = self.n_free + self.q
        self.lt_off = self.eta_off + self.r
        self.th_off = self.lt_off + 1
        self.dim = self.th_off + 1
        self.cs_sigma = cauchy_scale_sigma
        self.cs_tau = cauchy_scale_tau
        self.hc_norm_s = log(2.0 / (M_PI * cauchy_scale_sigma))
        self.hc_norm_t = log(2.0 / (M_PI * cauchy_scale_tau))
        self.mu = np.zeros((self.r, self.q))
        self.sig2 = np.zeros(self.r)

    def __call__(self, vec):
        cdef double[::1] u = np.ascontiguousarray(vec, dtype=np.float64)
        if u.shape[0] != self.dim:
            raise ValueError(
                f"expected a vector of length {self.dim}, got {u.shape[0]}")
        return self._evaluate(u)

    cdef double _evaluate(self, double[::1] u):
        cdef long a, b, s, g, k
        cdef double e, lth, theta, log_theta, tau
        cdef double d2, diff, va, vb, pv, m, s2, ca, cb, t, base, var, lp
        cdef double like, centres, scales, spread, ceiling, total, musq

        for g in range(self.r):
            e = u[self.eta_off + g]
            if e <= 0.0 or e >= 1.0:
                return -INFINITY
            self.sig2[g] = 0.5 * expm1(-2.0 / self.q * log(e))
        lth = u[self.th_off]
        if lth >= 0.0:
            theta = 1.0 / (1.0 + exp(-lth))
        else:
            theta = exp(lth) / (1.0 + exp(lth))
        if theta <= 0.0 or theta >= 1.0:
            return -INFINITY
        log_theta = log(theta)

        for a in range(self.r):
            for s in range(self.q):
                self.mu[a, s] = u[self.nu_off + s]
        for k in range(self.n_free):
            self.mu[self.free_rows[k], self.free_cols[k]] += u[k]

        like = 0.0
        for a in range(self.r):
            for b in range(a, self.r):
                d2 = 0.0
                for s in range(self.q):
                    diff = self.mu[a, s] - self.mu[b, s]
                    d2 += diff * diff
                va = self.sig2[a]
                vb = self.sig2[b]
                pv = va + vb
                m = exp(log_theta - 0.5 * self.q * log1p(pv)
                        - d2 / (2.0 * (1.0 + pv)))
                s2 = exp(2.0 * log_theta - 0.5 * self.q * log1p(2.0 * pv)
                         - d2 / (1.0 + 2.0 * pv))
                t = self.trials[a, b]
                if a == b:
                    ca = exp(2.0 * log_theta - 0.5 * self.q
                             * (log1p(3.0 * va) + log1p(va)))
                    base = m * (1.0 - m)
                    if self.weighted:
                        base += s2
                    if self.directed:
                        base += s2 - m * m
                    base += ((4.0 if self.directed else 2.0)
                             * (self.nsize[a] - 2.0) * (ca - m * m))
                    var = t * base
                    if self.weighted:
                        lp = _entry_weighted(self.counts[a, a], t * m, var)
                    else:
                        lp = _entry_binary(self.counts[a, a], t, t * m, var)
                    if lp == -INFINITY:
                        return -INFINITY
                    like += lp
                else:
                    ca = exp(2.0 * log_theta - 0.5 * self.q
                             * (log1p(2.0 * va + vb) + log1p(vb))
                             - d2 / (1.0 + 2.0 * va + vb))
                    cb = exp(2.0 * log_theta - 0.5 * self.q
                             * (log1p(2.0 * vb + va) + log1p(va))
                             - d2 / (1.0 + 2.0 * vb + va))
                    base = m * (1.0 - m)
                    if self.weighted:
                        base += s2
                    base += ((self.nsize[b] - 1.0) * (ca - m * m)
                             + (self.nsize[a] - 1.0) * (cb - m * m))
                    var = t * base
                    if self.weighted:
                        lp = _entry_weighted(self.counts[a, b], t * m, var)
                    else:
                        lp = _entry_binary(self.counts[a, b], t, t * m, var)
                    if lp == -INFINITY:
                        return -INFINITY
                    like += lp
                    if self.directed:
                        if self.weighted:
                            lp = _entry_weighted(self.counts[b, a], t * m, var)
                        else:
                            lp = _entry_binary(self.counts[b, a], t, t * m,
                                               var)
                        if lp == -INFINITY:
                            return -INFINITY
                        like += lp

        tau = exp(u[self.lt_off]) if u[self.lt_off] < 709.0 else INFINITY
        musq = 0.0
        for a in range(self.r):
            for s in range(self.q):
                musq += self.mu[a, s] * self.mu[a, s]
        centres = (-self.r * self.q * (0.5 * _LOG_2PI + log(tau))
                   - musq / (2.0 * tau * tau))
        scales = 0.0
        for g in range(self.r):
            e = u[self.eta_off + g]
            scales += (self.hc_norm_s
                       - log1p(self.sig2[g] / (self.cs_sigma * self.cs_sigma))
                       + (-2.0 / self.q - 1.0) * log(e)
                       - log(2.0 * self.q) - log(sqrt(self.sig2[g])))
        spread = (self.hc_norm_t - log1p((tau / self.cs_tau) ** 2)
                  + u[self.lt_off])
        ceiling = log_theta + log1p(-theta)

        total = like + centres + scales + spread + ceiling
        return total if isfinite(total) else -INFINITY
