"""Node-level simulation and brute-force checks for the analytic moments.

Everything here exists to ground the closed forms in something dumber:
explicit networks sampled node by node, Monte Carlo moment estimates with
jackknife standard errors, exhaustive enumeration of index patterns for
tiny groups, and one-dimensional quadrature for the Gaussian identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .kernel import ClusterPair, KernelParams
from .likelihood import AggregateMatrix
from .moments import TERM_CLASSES, GroupConfig, NetworkKind

__all__ = [
    "NetworkRealization",
    "MomentEstimate",
    "KernelMomentEstimate",
    "simulate_network",
    "aggregate",
    "sample_aggregate_entries",
    "mc_moments",
    "mc_kernel_moments",
    "enumerate_second_moment",
    "quadrature_gaussian_exp",
    "QuadratureError",
]

# Replications are simulated in fixed-size batches, one spawned RNG stream
# per batch, so results do not depend on any parallel execution plan.
_BATCH = 1000


@dataclass(frozen=True, eq=False)
class NetworkRealization:
    """One sampled network: latent coordinates, labels, adjacency."""

    coords: np.ndarray
    labels: np.ndarray
    adjacency: np.ndarray
    kind: NetworkKind

    @property
    def n_nodes(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class MomentEstimate:
    mean_hat: float
    var_hat: float
    se_mean: float
    se_var: float
    n_sims: int


@dataclass(frozen=True)
class KernelMomentEstimate:
    mean: tuple
    second: tuple
    cross_common_a: tuple
    cross_common_b: tuple
    n_draws: int


def _rates(coords: np.ndarray, theta: float) -> np.ndarray:
    diff = coords[:, np.newaxis, :] - coords[np.newaxis, :, :]
    d2 = np.einsum("ijs,ijs->ij", diff, diff)
    return theta * np.exp(-0.5 * d2)


def _draw_coords(config: GroupConfig, rng, count: int = 1) -> np.ndarray:
    """(count, n, q) latent coordinates, group blocks in label order."""
    out = np.empty((count, config.n_nodes, config.q))
    pos = 0
    for g in range(config.r):
        n_g = int(config.sizes[g])
        out[:, pos:pos + n_g] = (config.centres[g]
                                 + config.scales[g]
                                 * rng.standard_normal((count, n_g, config.q)))
        pos += n_g
    return out


def simulate_network(config: GroupConfig, params: KernelParams,
                     kind: NetworkKind, seed) -> NetworkRealization:
    """Sample one network: coordinates per group, then edges pair by pair.

    Undirected networks sample each unordered pair once and store it
    symmetrically; directed ones sample all ordered pairs. Weighted edges
    are Poisson counts at the kernel rate instead of Bernoulli draws.
    """
    if config.q != params.q:
        raise ValueError("configuration and kernel disagree on q")
    rng = np.random.default_rng(seed)
    coords = _draw_coords(config, rng)[0]
    labels = np.repeat(np.arange(config.r), config.sizes)
    rate = _rates(coords, params.theta)
    n = coords.shape[0]
    if kind.weighted:
        y = rng.poisson(rate)
    else:
        y = (rng.random((n, n)) < rate).astype(np.int64)
    np.fill_diagonal(y, 0)
    if not kind.directed:
        # keep the draw made above the diagonal, mirror it below
        y = np.triu(y, 1)
        y = y + y.T
    return NetworkRealization(coords=coords, labels=labels,
                              adjacency=y.astype(np.int64), kind=kind)


def aggregate(network: NetworkRealization) -> AggregateMatrix:
    """Sum the adjacency over the group partition.

    Undirected networks count each unordered pair once; the table stays
    symmetric because the same edge feeds both (a, b) and (b, a).
    """
    r = int(network.labels.max()) + 1
    onehot = np.zeros((network.n_nodes, r), dtype=np.int64)
    onehot[np.arange(network.n_nodes), network.labels] = 1
    if network.kind.directed:
        counts = onehot.T @ network.adjacency @ onehot
    else:
        upper = onehot.T @ np.triu(network.adjacency, 1) @ onehot
        counts = upper + upper.T - np.diag(upper.diagonal())
    sizes = onehot.sum(axis=0)
    return AggregateMatrix(counts=counts, sizes=sizes, kind=network.kind)


def sample_aggregate_entries(config: GroupConfig, params: KernelParams,
                             kind: NetworkKind, a: int, b: int,
                             n_sims: int, seed) -> np.ndarray:
    """Independent draws of the single aggregate entry Y_ab."""
    if config.q != params.q:
        raise ValueError("configuration and kernel disagree on q")
    sizes = config.sizes
    labels = np.repeat(np.arange(config.r), sizes)
    row = labels == a
    col = labels == b
    streams = np.random.SeedSequence(seed).spawn(
        (n_sims + _BATCH - 1) // _BATCH)
    out = np.empty(n_sims, dtype=np.int64)
    done = 0
    for stream in streams:
        count = min(_BATCH, n_sims - done)
        rng = np.random.Generator(np.random.PCG64(stream))
        coords = _draw_coords(config, rng, count)
        diff = (coords[:, row][:, :, np.newaxis, :]
                - coords[:, col][:, np.newaxis, :, :])
        rate = params.theta * np.exp(
            -0.5 * np.einsum("sijq,sijq->sij", diff, diff))
        if kind.weighted:
            y = rng.poisson(rate)
        else:
            y = rng.random(rate.shape) < rate
        if a == b:
            n_a = int(sizes[a])
            mask = (np.triu(np.ones((n_a, n_a), dtype=bool), 1) if
                    not kind.directed else ~np.eye(n_a, dtype=bool))
            out[done:done + count] = np.sum(y * mask, axis=(1, 2))
        else:
            out[done:done + count] = np.sum(y, axis=(1, 2))
        done += count
    return out


def mc_moments(config: GroupConfig, params: KernelParams, kind: NetworkKind,
               a: int, b: int, n_sims: int, seed) -> MomentEstimate:
    """Empirical mean and variance of Y_ab with jackknife standard errors."""
    if n_sims < 2:
        raise ValueError("need at least two simulations")
    y = sample_aggregate_entries(config, params, kind, a, b, n_sims, seed)
    y = y.astype(float)
    n = float(n_sims)
    mean = y.mean()
    var = y.var(ddof=1)
    # Delete-one statistics, vectorized through the first two power sums.
    s1 = y.sum()
    s2 = (y * y).sum()
    loo_mean = (s1 - y) / (n - 1.0)
    loo_var = (s2 - y * y - (s1 - y) ** 2 / (n - 1.0)) / (n - 2.0)
    se_mean = math.sqrt((n - 1.0) / n * np.sum((loo_mean - loo_mean.mean()) ** 2))
    se_var = math.sqrt((n - 1.0) / n * np.sum((loo_var - loo_var.mean()) ** 2))
    return MomentEstimate(mean_hat=float(mean), var_hat=float(var),
                          se_mean=se_mean, se_var=se_var, n_sims=n_sims)


def mc_kernel_moments(pair: ClusterPair, params: KernelParams,
                      n_draws: int, seed) -> KernelMomentEstimate:
    """Monte Carlo estimates of the four kernel moments, with standard errors.

    Draws node coordinates directly: i, k from cluster a and j, l from
    cluster b, all independent; each estimate is (value, standard error).
    """
    if pair.dim != params.q:
        raise ValueError("cluster pair and kernel disagree on q")
    rng = np.random.default_rng(seed)
    sd_a = math.sqrt(pair.var_a)
    sd_b = math.sqrt(pair.var_b)
    q = params.q

    def cloud(centre, sd):
        return centre + sd * rng.standard_normal((n_draws, q))

    zi = cloud(pair.centre_a, sd_a)
    zk = cloud(pair.centre_a, sd_a)
    zj = cloud(pair.centre_b, sd_b)
    zl = cloud(pair.centre_b, sd_b)

    def lam(x, y):
        return params.theta * np.exp(-0.5 * np.sum((x - y) ** 2, axis=1))

    def stat(values):
        se = values.std(ddof=1) / math.sqrt(n_draws)
        return (float(values.mean()), float(se))

    k_ij = lam(zi, zj)
    return KernelMomentEstimate(
        mean=stat(k_ij),
        second=stat(k_ij * k_ij),
        cross_common_a=stat(k_ij * lam(zi, zl)),
        cross_common_b=stat(k_ij * lam(zk, zj)),
        n_draws=n_draws)


def _classify(i, j, k, l) -> str:
    if i == k and j == l:
        return "ij_ij"
    if i == l and j == k:
        return "ij_ji"
    if i == k:
        return "ij_il"
    if j == l:
        return "ij_kj"
    if i == l:
        return "ij_ki"
    if j == k:
        return "ij_jl"
    return "ij_kl"


def enumerate_second_moment(n_a: int, n_b: int | None = None,
                            kind: NetworkKind = NetworkKind()) -> dict[str, int]:
    """Count index patterns of (y_ij, y_kl) pairs by exhaustive enumeration.

    The slow mirror of :func:`aggnet.moments.term_coefficients`; refuses
    sizes above 8 where the quartic loop stops being instant.
    """
    if n_a < 1 or (n_b is not None and n_b < 1):
        raise ValueError("group sizes must be positive")
    if n_a > 8 or (n_b is not None and n_b > 8):
        raise ValueError("enumeration is quartic; sizes above 8 refused")
    counts = dict.fromkeys(TERM_CLASSES, 0)
    if n_b is None:
        if kind.directed:
            pairs = [(i, j) for i in range(n_a) for j in range(n_a) if i != j]
        else:
            pairs = [(i, j) for i in range(n_a) for j in range(i + 1, n_a)]
    else:
        # disjoint label ranges so cross-group index clashes cannot happen
        pairs = [(i, j) for i in range(n_a)
                 for j in range(n_a, n_a + n_b)]
    for i, j in pairs:
        for k, l in pairs:
            counts[_classify(i, j, k, l)] += 1
    return counts


class QuadratureError(RuntimeError):
    """Numerical integration failed to reach the requested accuracy."""


def quadrature_gaussian_exp(mu: float, var: float) -> float:
    """E[exp(-x^2/2)] for x ~ Normal(mu, var), by adaptive quadrature.

    Independent check of :func:`aggnet.kernel.gaussian_exp_identity`; a
    point mass needs no integral.
    """
    if var < 0:
        raise ValueError("variance must be non-negative")
    if var == 0.0:
        return math.exp(-0.5 * mu * mu)
    sd = math.sqrt(var)

    def integrand(x):
        z = (x - mu) / sd
        return math.exp(-0.5 * x * x) * math.exp(-0.5 * z * z) \
            / (sd * math.sqrt(2.0 * math.pi))

    lo = min(mu - 12.0 * sd, -12.0)
    hi = max(mu + 12.0 * sd, 12.0)
    value, abserr = quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-13,
                         limit=200)
    if abserr > 1e-10:
        raise QuadratureError(
            f"integral error estimate {abserr:.2e} exceeds 1e-10")
    return value
