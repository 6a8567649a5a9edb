"""Closed-form moments of a Gaussian connectivity kernel between node clusters.

Two nodes at latent positions ``x`` and ``y`` in R^q connect with rate
``theta * exp(-|x - y|^2 / 2)``.  When positions are drawn independently from
isotropic Gaussian clusters the kernel's mean, second moment, and the cross
moment of two kernel values sharing one node all have closed forms.  They are
evaluated in log space and exponentiated once so that distant or very diffuse
cluster pairs underflow gracefully instead of losing precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelParams",
    "ClusterPair",
    "KernelMoments",
    "gaussian_exp_identity",
    "expected_kernel",
    "kernel_second_moment",
    "kernel_cross_moment",
    "kernel_moments",
    "log_expected_kernel",
    "log_kernel_second_moment",
    "log_kernel_cross_moment",
    "optimal_scale_sq",
]


@dataclass(frozen=True)
class KernelParams:
    """Connectivity ceiling and latent dimension."""

    theta: float
    q: int

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.q < 1:
            raise ValueError(f"q must be a positive integer, got {self.q}")


@dataclass(frozen=True, eq=False)
class ClusterPair:
    """Two isotropic Gaussian clusters: centres and per-cluster variances."""

    centre_a: np.ndarray
    centre_b: np.ndarray
    var_a: float
    var_b: float

    def __post_init__(self):
        ca = np.asarray(self.centre_a, dtype=float)
        cb = np.asarray(self.centre_b, dtype=float)
        if ca.ndim != 1 or cb.ndim != 1:
            raise ValueError("cluster centres must be 1-d coordinate vectors")
        if ca.shape != cb.shape:
            raise ValueError(
                f"centre dimensions differ: {ca.shape} vs {cb.shape}")
        if self.var_a < 0 or self.var_b < 0:
            raise ValueError("cluster variances must be non-negative")
        object.__setattr__(self, "centre_a", ca)
        object.__setattr__(self, "centre_b", cb)

    @property
    def delta_sq(self) -> float:
        """Squared distance between the centres."""
        d = self.centre_a - self.centre_b
        return float(d @ d)

    @property
    def dim(self) -> int:
        return self.centre_a.shape[0]


@dataclass(frozen=True)
class KernelMoments:
    mean: float
    second: float
    cross_common_a: float
    cross_common_b: float


def gaussian_exp_identity(mu: float, var: float) -> float:
    """E[exp(-x^2/2)] for x ~ Normal(mu, var).

    Equals ``(1 + var)^(-1/2) * exp(-mu^2 / (2 (1 + var)))``; the scalar
    building block behind every moment in this module.
    """
    if var < 0:
        raise ValueError("variance must be non-negative")
    return math.exp(-0.5 * math.log1p(var) - mu * mu / (2.0 * (1.0 + var)))


def _check(pair: ClusterPair, params: KernelParams) -> None:
    if pair.dim != params.q:
        raise ValueError(
            f"centre dimension {pair.dim} does not match q={params.q}")


def log_expected_kernel(pair: ClusterPair, params: KernelParams) -> float:
    _check(pair, params)
    if params.theta == 0.0:
        return -math.inf
    v = pair.var_a + pair.var_b
    return (math.log(params.theta)
            - 0.5 * params.q * math.log1p(v)
            - pair.delta_sq / (2.0 * (1.0 + v)))


def log_kernel_second_moment(pair: ClusterPair, params: KernelParams) -> float:
    _check(pair, params)
    if params.theta == 0.0:
        return -math.inf
    v = 2.0 * (pair.var_a + pair.var_b)
    return (2.0 * math.log(params.theta)
            - 0.5 * params.q * math.log1p(v)
            - pair.delta_sq / (1.0 + v))


def log_kernel_cross_moment(pair: ClusterPair, params: KernelParams,
                            shared: str = "a") -> float:
    """Log of E[k(z_i, z_j) k(z_i, z_l)] with the shared node in one cluster.

    ``shared="a"``: i is the common node, drawn from cluster a; j and l are
    distinct draws from cluster b.  ``shared="b"`` swaps the roles.
    """
    _check(pair, params)
    if shared == "a":
        vs, vo = pair.var_a, pair.var_b
    elif shared == "b":
        vs, vo = pair.var_b, pair.var_a
    else:
        raise ValueError(f"shared must be 'a' or 'b', got {shared!r}")
    if params.theta == 0.0:
        return -math.inf
    w = 2.0 * vs + vo
    return (2.0 * math.log(params.theta)
            - 0.5 * params.q * (math.log1p(w) + math.log1p(vo))
            - pair.delta_sq / (1.0 + w))


def expected_kernel(pair: ClusterPair, params: KernelParams) -> float:
    """Mean connection rate between one node of each cluster."""
    return math.exp(log_expected_kernel(pair, params))


def kernel_second_moment(pair: ClusterPair, params: KernelParams) -> float:
    return math.exp(log_kernel_second_moment(pair, params))


def kernel_cross_moment(pair: ClusterPair, params: KernelParams,
                        shared: str = "a") -> float:
    return math.exp(log_kernel_cross_moment(pair, params, shared))


def kernel_moments(pair: ClusterPair, params: KernelParams) -> KernelMoments:
    """All four moments of the kernel for one cluster pair."""
    return KernelMoments(
        mean=expected_kernel(pair, params),
        second=kernel_second_moment(pair, params),
        cross_common_a=kernel_cross_moment(pair, params, "a"),
        cross_common_b=kernel_cross_moment(pair, params, "b"),
    )


def optimal_scale_sq(delta: float, q: int) -> float:
    """Common cluster variance maximising the expected kernel.

    For two clusters with equal variance s^2 at centre distance ``delta`` the
    expected kernel is maximised at s^2 = (delta^2 - q) / (2 q), clipped at
    zero: clusters closer than sqrt(q) are best kept as point masses.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if q < 1:
        raise ValueError("q must be a positive integer")
    return max(delta * delta - q, 0.0) / (2.0 * q)
