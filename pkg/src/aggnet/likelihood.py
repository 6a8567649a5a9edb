"""Moment-matched count likelihoods for aggregate connection volumes.

Aggregate entries are sums of many weakly dependent indicator (or Poisson)
variables, so their marginals are approximated by the two-parameter count
family matching the analytic mean and variance: beta-binomial for binary
networks, negative binomial for weighted ones.  Underdispersed corner cases
clamp to the binomial/Poisson limits instead of failing.

The log-pmfs avoid the usual ``betaln``/``gammaln`` difference forms when the
concentration is huge (the clamped limits push it to ~1e10, where cancellation
costs five digits); an exact rising-factorial identity
``lgamma(a + k) - lgamma(a) = k log a + sum_j log1p(j / a)`` takes over there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .kernel import KernelParams
from .moments import GroupConfig, NetworkKind, aggregate_moments, trials_matrix

__all__ = [
    "EPSILON",
    "MomentMatchError",
    "AggregateMatrix",
    "BetaBinomialParams",
    "NegBinomialParams",
    "match_beta_binomial",
    "match_negative_binomial",
    "beta_binomial_log_pmf",
    "neg_binomial_log_pmf",
    "aggregate_entry_log_pmf",
    "approximate_log_likelihood",
    "matrix_log_likelihood",
]

# Floor for "variance minus its distribution-family minimum" before dividing.
EPSILON = 1e-9
# Above these the lgamma-difference forms lose too many digits; switch to
# exact rising-factorial sums (cost linear in the trial count).
_PHI_SWITCH = 1e6
_SIZE_SWITCH = 1e7
_PHI_FLOOR = 1e-12


class MomentMatchError(ValueError):
    """Requested moments outside the family's reachable set."""

    def __init__(self, message: str, *, mean: float, variance: float,
                 trials: int | None = None):
        super().__init__(
            f"{message} (mean={mean!r}, variance={variance!r}, trials={trials!r})")
        self.mean = mean
        self.variance = variance
        self.trials = trials


@dataclass(frozen=True)
class BetaBinomialParams:
    trials: int
    alpha: float
    beta: float

    def __post_init__(self):
        if self.trials < 0:
            raise ValueError("trials must be non-negative")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")

    @property
    def phi(self) -> float:
        return self.alpha + self.beta

    @property
    def implied_mean(self) -> float:
        return self.trials * self.alpha / self.phi

    @property
    def implied_variance(self) -> float:
        phi = self.phi
        return (self.trials * self.alpha * self.beta * (phi + self.trials)
                / (phi * phi * (phi + 1.0)))


@dataclass(frozen=True)
class NegBinomialParams:
    size: float
    prob: float
    # Cached logs: recovering log(prob) from a stored prob that rounded to
    # ~1 loses the digits that matter when size is ~1e10.
    log_prob: float = None
    log1m_prob: float = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("size must be positive")
        if not 0.0 < self.prob <= 1.0:
            raise ValueError("prob must lie in (0, 1]")
        if self.log_prob is None:
            object.__setattr__(self, "log_prob", math.log(self.prob))
        if self.log1m_prob is None:
            one_minus = 1.0 - self.prob
            object.__setattr__(
                self, "log1m_prob",
                math.log(one_minus) if one_minus > 0 else -math.inf)

    @property
    def implied_mean(self) -> float:
        return self.size * math.exp(self.log1m_prob - self.log_prob)

    @property
    def implied_variance(self) -> float:
        return self.implied_mean / self.prob


@dataclass(frozen=True, eq=False)
class AggregateMatrix:
    """Observed volume table together with the partition that produced it."""

    counts: np.ndarray
    sizes: np.ndarray
    kind: NetworkKind

    def __post_init__(self):
        counts = np.asarray(self.counts)
        sizes = np.asarray(self.sizes, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("counts must be a square matrix")
        if sizes.ndim != 1 or sizes.shape[0] != counts.shape[0]:
            raise ValueError("sizes must have one entry per group")
        if np.any(sizes < 1):
            raise ValueError("every group needs at least one node")
        if not np.issubdtype(counts.dtype, np.integer):
            rounded = np.rint(counts)
            if not np.array_equal(rounded, counts):
                raise ValueError("counts must be integers")
            counts = rounded
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if not self.kind.directed and not np.array_equal(counts, counts.T):
            raise ValueError("undirected volume tables must be symmetric")
        if not self.kind.weighted:
            t = trials_matrix(sizes, self.kind)
            if np.any(counts > t):
                bad = np.argwhere(counts > t)[0]
                raise ValueError(
                    f"entry {tuple(bad)} exceeds its {t[tuple(bad)]} node pairs")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "sizes", sizes)

    @property
    def r(self) -> int:
        return self.sizes.shape[0]

    @property
    def trials(self) -> np.ndarray:
        return trials_matrix(self.sizes, self.kind)


def _log_rising(a: float, k: int) -> float:
    """log of a (a+1) ... (a+k-1), exact for huge a where lgamma differences cancel."""
    total = k * math.log(a)
    for j in range(1, k):
        total += math.log1p(j / a)
    return total


def _bb_log_pmf(y: int, t: int, alpha: float, beta: float) -> float:
    choose = gammaln(t + 1.0) - gammaln(y + 1.0) - gammaln(t - y + 1.0)
    phi = alpha + beta
    if phi > _PHI_SWITCH:
        core = (_log_rising(alpha, y) + _log_rising(beta, t - y)
                - _log_rising(phi, t))
    else:
        core = (gammaln(y + alpha) - gammaln(alpha)
                + gammaln(t - y + beta) - gammaln(beta)
                - gammaln(t + phi) + gammaln(phi))
    return float(choose + core)


def beta_binomial_log_pmf(y: int, params: BetaBinomialParams) -> float:
    t = params.trials
    if y != int(y) or y < 0 or y > t:
        return -math.inf
    if t == 0:
        return 0.0
    return _bb_log_pmf(int(y), t, params.alpha, params.beta)


def _nb_log_pmf(y: int, size: float, log_prob: float,
                log1m_prob: float) -> float:
    if size > _SIZE_SWITCH:
        rising = _log_rising(size, y)
    else:
        rising = gammaln(y + size) - gammaln(size)
    return float(rising - gammaln(y + 1.0)
                 + size * log_prob + y * log1m_prob)


def neg_binomial_log_pmf(y: int, params: NegBinomialParams) -> float:
    if y != int(y) or y < 0:
        return -math.inf
    if params.prob == 1.0:
        return 0.0 if y == 0 else -math.inf
    return _nb_log_pmf(int(y), params.size, params.log_prob,
                       params.log1m_prob)


def match_beta_binomial(mean: float, variance: float,
                        trials: int) -> BetaBinomialParams:
    """Beta-binomial on ``trials`` draws with the requested mean and variance.

    The dispersion ratio f = variance / (binomial variance at the same mean)
    determines the concentration phi = (trials - f) / (f - 1); f <= 1 clamps
    to the binomial limit by flooring the denominator at ``EPSILON``.
    """
    if trials < 1:
        raise MomentMatchError("need at least one trial",
                               mean=mean, variance=variance, trials=trials)
    if not 0.0 < mean < trials:
        raise MomentMatchError("mean must lie strictly between 0 and trials",
                               mean=mean, variance=variance, trials=trials)
    if variance <= 0.0:
        raise MomentMatchError("variance must be positive",
                               mean=mean, variance=variance, trials=trials)
    rho = mean / trials
    f = variance / (trials * rho * (1.0 - rho))
    phi = max((trials - f) / max(f - 1.0, EPSILON), _PHI_FLOOR)
    return BetaBinomialParams(trials=trials, alpha=rho * phi,
                              beta=(1.0 - rho) * phi)


def match_negative_binomial(mean: float,
                            variance: float) -> NegBinomialParams:
    """Negative binomial with the requested mean and variance.

    Underdispersion (variance <= mean) clamps the excess variance at
    ``EPSILON``, keeping the mean intact and approaching the Poisson limit.
    """
    if mean <= 0.0:
        raise MomentMatchError("mean must be positive",
                               mean=mean, variance=variance)
    if variance <= 0.0:
        raise MomentMatchError("variance must be positive",
                               mean=mean, variance=variance)
    excess = max(variance - mean, EPSILON)
    return NegBinomialParams(
        size=mean * mean / excess,
        prob=mean / (mean + excess),
        log_prob=-math.log1p(excess / mean),
        log1m_prob=math.log(excess) - math.log(mean + excess),
    )


def _binom_log_pmf(y: int, t: int, rho: float) -> float:
    choose = gammaln(t + 1.0) - gammaln(y + 1.0) - gammaln(t - y + 1.0)
    return float(choose + y * math.log(rho) + (t - y) * math.log1p(-rho))


def aggregate_entry_log_pmf(y: int, mean: float, variance: float,
                            trials: int, weighted: bool) -> float:
    """Log probability of one observed volume under the matched marginal.

    Degenerate moments become point masses: zero trials or a vanished mean
    pin the entry at 0, a saturated mean pins a binary entry at ``trials``.
    """
    if weighted:
        if mean <= 0.0:
            return 0.0 if y == 0 else -math.inf
        return neg_binomial_log_pmf(y, match_negative_binomial(mean, variance))
    if trials == 0 or mean <= 0.0:
        return 0.0 if y == 0 else -math.inf
    if mean >= trials:
        return 0.0 if y == trials else -math.inf
    if variance <= 0.0:
        # Unreachable for exact kernel moments; kept as an underflow guard.
        return _binom_log_pmf(y, trials, mean / trials)
    return beta_binomial_log_pmf(
        y, match_beta_binomial(mean, variance, trials))


def approximate_log_likelihood(data: AggregateMatrix, config: GroupConfig,
                               params: KernelParams) -> float:
    """Sum of matched-marginal log-pmfs over the volume table.

    Directed tables contribute every ordered pair including the diagonal;
    undirected ones only the upper triangle, so each unordered pair counts
    once.  Entries are treated as independent.
    """
    if config.r != data.r:
        raise ValueError(
            f"partition has {config.r} groups but data has {data.r}")
    if not np.array_equal(config.sizes, data.sizes):
        raise ValueError("group sizes of data and configuration differ")
    mom = aggregate_moments(config, params, data.kind)
    weighted = data.kind.weighted
    total = 0.0
    for a in range(data.r):
        columns = range(data.r) if data.kind.directed else range(a, data.r)
        for b in columns:
            lp = aggregate_entry_log_pmf(
                int(data.counts[a, b]), mom.mean[a, b], mom.variance[a, b],
                int(mom.trials[a, b]), weighted)
            if lp == -math.inf:
                return -math.inf
            total += lp
    return total


def _bb_log_pmf_array(y, t, alpha, beta):
    choose = gammaln(t + 1.0) - gammaln(y + 1.0) - gammaln(t - y + 1.0)
    phi = alpha + beta
    out = np.empty_like(choose)
    safe = phi <= _PHI_SWITCH
    if np.any(safe):
        out[safe] = (gammaln(y[safe] + alpha[safe]) - gammaln(alpha[safe])
                     + gammaln(t[safe] - y[safe] + beta[safe])
                     - gammaln(beta[safe])
                     - gammaln(t[safe] + phi[safe]) + gammaln(phi[safe]))
    for i in np.flatnonzero(~safe):
        out[i] = (_log_rising(alpha[i], int(y[i]))
                  + _log_rising(beta[i], int(t[i] - y[i]))
                  - _log_rising(phi[i], int(t[i])))
    return choose + out


def _nb_log_pmf_array(y, size, log_prob, log1m_prob):
    rising = np.empty_like(size)
    safe = size <= _SIZE_SWITCH
    rising[safe] = gammaln(y[safe] + size[safe]) - gammaln(size[safe])
    for i in np.flatnonzero(~safe):
        rising[i] = _log_rising(size[i], int(y[i]))
    return rising - gammaln(y + 1.0) + size * log_prob + y * log1m_prob


def matrix_log_likelihood(counts: np.ndarray, mean: np.ndarray,
                          variance: np.ndarray, trials: np.ndarray,
                          kind: NetworkKind) -> float:
    """Vectorized twin of :func:`approximate_log_likelihood`.

    Takes precomputed moment tables instead of a cluster configuration; the
    sampling hot path builds those tables directly.  Same entry selection,
    same degenerate-case handling, same summation order.
    """
    if kind.directed:
        y = counts.ravel().astype(np.int64)
        m = mean.ravel()
        v = variance.ravel()
        t = trials.ravel().astype(np.int64)
    else:
        iu = np.triu_indices(counts.shape[0])
        y = counts[iu].astype(np.int64)
        m = mean[iu]
        v = variance[iu]
        t = trials[iu].astype(np.int64)

    lp = np.zeros(y.shape[0])
    if kind.weighted:
        dead = m <= 0.0
        if np.any(y[dead] != 0):
            return -math.inf
        live = ~dead
        if np.any(live):
            ml, vl = m[live], v[live]
            excess = np.maximum(vl - ml, EPSILON)
            lp[live] = _nb_log_pmf_array(
                y[live].astype(float), ml * ml / excess,
                -np.log1p(excess / ml),
                np.log(excess) - np.log(ml + excess))
    else:
        at_zero = (t == 0) | (m <= 0.0)
        at_full = ~at_zero & (m >= t)
        if np.any(y[at_zero] != 0) or np.any(y[at_full] != t[at_full]):
            return -math.inf
        live = ~at_zero & ~at_full
        if np.any(live):
            yl = y[live].astype(float)
            tl = t[live].astype(float)
            ml, vl = m[live], v[live]
            rho = ml / tl
            f = vl / (tl * rho * (1.0 - rho))
            phi = np.maximum((tl - f) / np.maximum(f - 1.0, EPSILON),
                             _PHI_FLOOR)
            lp[live] = _bb_log_pmf_array(yl, tl, rho * phi,
                                         (1.0 - rho) * phi)
    total = float(np.sum(lp))
    return total if math.isfinite(total) else -math.inf
