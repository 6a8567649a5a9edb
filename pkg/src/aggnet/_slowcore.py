"""Vectorized numpy evaluator for the packed log posterior.

Fallback twin of the compiled ``_fastcore`` extension: same quantity, same
clamps and branch thresholds, assembled from whole-matrix operations instead
of C loops.  Kept in lockstep with the reference implementation in
:mod:`aggnet.model`; the test suite pins all three against each other.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from .likelihood import matrix_log_likelihood
from .moments import trials_matrix

_LOG_2PI = math.log(2.0 * math.pi)


def make_evaluator(data, layout, prior):
    counts = data.counts
    kind = data.kind
    trials = trials_matrix(data.sizes, kind)
    t = trials.astype(float)
    r, q = layout.r, layout.q
    fr, fc = layout.free_rows, layout.free_cols
    n_free = layout.n_free
    nu_off, eta_off = layout.nu_offset, layout.eta_offset
    lt_off, th_off = layout.log_tau_offset, layout.logit_theta_offset
    n = data.sizes.astype(float)
    shared_within = (4.0 if kind.directed else 2.0) * (n - 2.0)
    cs_s = prior.cauchy_scale_sigma
    cs_t = prior.cauchy_scale_tau
    hc_norm_s = math.log(2.0 / (math.pi * cs_s))
    hc_norm_t = math.log(2.0 / (math.pi * cs_t))

    def evaluate(vec: np.ndarray) -> float:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (layout.dim,):
            raise ValueError(
                f"expected a vector of length {layout.dim}, got {vec.shape}")
        eta = vec[eta_off:lt_off]
        if np.any(eta <= 0.0) or np.any(eta >= 1.0):
            return -math.inf
        theta = float(expit(vec[th_off]))
        if theta <= 0.0 or theta >= 1.0:
            return -math.inf

        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            log_eta = np.log(eta)
            sig2 = 0.5 * np.expm1(-2.0 / q * log_eta)
            mu = np.zeros((r, q))
            mu[fr, fc] = vec[:n_free]
            mu += vec[nu_off:eta_off][np.newaxis, :]

            diff = mu[:, np.newaxis, :] - mu[np.newaxis, :, :]
            d2 = np.einsum("abs,abs->ab", diff, diff)
            log_theta = math.log(theta)
            pair_var = sig2[:, np.newaxis] + sig2[np.newaxis, :]
            m = np.exp(log_theta - 0.5 * q * np.log1p(pair_var)
                       - d2 / (2.0 * (1.0 + pair_var)))
            s2 = np.exp(2.0 * log_theta - 0.5 * q * np.log1p(2.0 * pair_var)
                        - d2 / (1.0 + 2.0 * pair_var))
            skew = 2.0 * sig2[:, np.newaxis] + sig2[np.newaxis, :]
            cross_a = np.exp(
                2.0 * log_theta
                - 0.5 * q * (np.log1p(skew) + np.log1p(sig2)[np.newaxis, :])
                - d2 / (1.0 + skew))
            cross_b = cross_a.T
            cov_a = cross_a - m * m
            cov_b = cross_b - m * m

            bernoulli = m * (1.0 - m)
            extra = s2 if kind.weighted else 0.0
            per_pair = (bernoulli + extra
                        + (n[np.newaxis, :] - 1.0) * cov_a
                        + (n[:, np.newaxis] - 1.0) * cov_b)
            within = bernoulli.diagonal() + (extra.diagonal()
                                             if kind.weighted else 0.0)
            if kind.directed:
                within = within + s2.diagonal() - m.diagonal() ** 2
            within = within + shared_within * cov_a.diagonal()
            var = t * per_pair
            np.fill_diagonal(var, t.diagonal() * within)
            mean = t * m

            like = matrix_log_likelihood(counts, mean, var, trials, kind)
            if like == -math.inf:
                return -math.inf

            tau = math.exp(vec[lt_off]) if vec[lt_off] < 709.0 else math.inf
            centres = (-r * q * (0.5 * _LOG_2PI + math.log(tau))
                       - float(np.sum(mu * mu)) / (2.0 * tau * tau))
            sigma = np.sqrt(sig2)
            scales = float(np.sum(
                hc_norm_s - np.log1p(sig2 / (cs_s * cs_s))
                + (-2.0 / q - 1.0) * log_eta - math.log(2.0 * q)
                - np.log(sigma)))
            spread = (hc_norm_t - math.log1p((tau / cs_t) ** 2)
                      + float(vec[lt_off]))
            ceiling = log_theta + math.log1p(-theta)

        total = like + centres + scales + spread + ceiling
        return total if math.isfinite(total) else -math.inf

    return evaluate
