"""Mean and variance of group-aggregated connection volumes.

Summing a latent space network over a fixed node partition gives an r-by-r
table of connection counts Y.  Because nodes in a group are exchangeable,
the second moment of an entry decomposes over seven classes of index
patterns in the defining double sum (both pairs equal, reversed, sharing
one node in four possible positions, or fully distinct).  The class
multiplicities live in :func:`term_coefficients`; a brute-force recount is
in :func:`aggnet.simulate.enumerate_second_moment`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import ClusterPair, KernelParams, kernel_moments

__all__ = [
    "TERM_CLASSES",
    "GroupConfig",
    "NetworkKind",
    "AggregateMoments",
    "term_coefficients",
    "trials_matrix",
    "aggregate_mean",
    "within_group_variance",
    "between_group_variance",
    "aggregate_moments",
]

# Index patterns of (y_ij, y_kl) pairs, in fixed order: matched, reversed,
# then the four single-shared-node patterns, then all-distinct.
TERM_CLASSES = ("ij_ij", "ij_ji", "ij_il", "ij_kj", "ij_ki", "ij_jl", "ij_kl")


@dataclass(frozen=True)
class NetworkKind:
    """Edge semantics: ordered vs unordered pairs, binary vs counts."""

    directed: bool = True
    weighted: bool = False


@dataclass(frozen=True, eq=False)
class GroupConfig:
    """Cluster layout of the partition: sizes, centres, and scales."""

    sizes: np.ndarray
    centres: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=np.int64)
        centres = np.asarray(self.centres, dtype=float)
        scales = np.asarray(self.scales, dtype=float)
        if sizes.ndim != 1:
            raise ValueError("sizes must be a 1-d integer array")
        if centres.ndim != 2 or centres.shape[0] != sizes.shape[0]:
            raise ValueError("centres must be an (r, q) array")
        if scales.shape != sizes.shape:
            raise ValueError("scales must match sizes in length")
        if np.any(sizes < 1):
            raise ValueError("every group needs at least one node")
        if np.any(scales < 0):
            raise ValueError("group scales must be non-negative")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "centres", centres)
        object.__setattr__(self, "scales", scales)

    @property
    def r(self) -> int:
        return self.sizes.shape[0]

    @property
    def q(self) -> int:
        return self.centres.shape[1]

    @property
    def n_nodes(self) -> int:
        return int(self.sizes.sum())

    def pair(self, a: int, b: int) -> ClusterPair:
        return ClusterPair(
            centre_a=self.centres[a],
            centre_b=self.centres[b],
            var_a=float(self.scales[a]) ** 2,
            var_b=float(self.scales[b]) ** 2,
        )


@dataclass(frozen=True, eq=False)
class AggregateMoments:
    """Marginal mean/variance/trial-count tables over all group pairs."""

    mean: np.ndarray
    variance: np.ndarray
    trials: np.ndarray


def term_coefficients(n_a: int, n_b: int | None = None,
                      kind: NetworkKind = NetworkKind()) -> dict[str, int]:
    """Multiplicity of each index-pattern class in the second moment of Y.

    ``n_b is None`` asks for a diagonal (within-group) entry, otherwise for
    the entry between two distinct groups of the given sizes.  Counts are
    exact integers; their total is the squared number of summands.
    """
    if n_a < 1 or (n_b is not None and n_b < 1):
        raise ValueError("group sizes must be positive")
    counts = dict.fromkeys(TERM_CLASSES, 0)
    if n_b is None:
        n = n_a
        if n < 2:
            return counts  # no pairs, empty table
        if kind.directed:
            pref = n * (n - 1)
            counts["ij_ij"] = pref
            counts["ij_ji"] = pref
            for key in ("ij_il", "ij_kj", "ij_ki", "ij_jl"):
                counts[key] = pref * (n - 2)
            counts["ij_kl"] = pref * (n - 2) * (n - 3)
        else:
            # Unordered pairs i < j; each product divides exactly.
            counts["ij_ij"] = n * (n - 1) // 2
            counts["ij_il"] = n * (n - 1) * (n - 2) // 3
            counts["ij_kj"] = n * (n - 1) * (n - 2) // 3
            counts["ij_ki"] = n * (n - 1) * (n - 2) // 6
            counts["ij_jl"] = n * (n - 1) * (n - 2) // 6
            counts["ij_kl"] = n * (n - 1) * (n - 2) * (n - 3) // 4
    else:
        # One index from each group: reversal and cross-group sharing
        # patterns cannot occur, directed or not.
        pref = n_a * n_b
        counts["ij_ij"] = pref
        counts["ij_il"] = pref * (n_b - 1)
        counts["ij_kj"] = pref * (n_a - 1)
        counts["ij_kl"] = pref * (n_a - 1) * (n_b - 1)
    return counts


def trials_matrix(sizes: np.ndarray, kind: NetworkKind) -> np.ndarray:
    """Number of node pairs feeding each aggregate entry."""
    sizes = np.asarray(sizes, dtype=np.int64)
    t = np.outer(sizes, sizes)
    if kind.directed:
        np.fill_diagonal(t, sizes * (sizes - 1))
    else:
        np.fill_diagonal(t, sizes * (sizes - 1) // 2)
    return t


def aggregate_mean(config: GroupConfig, params: KernelParams,
                   kind: NetworkKind, a: int, b: int) -> float:
    """Expected volume between groups a and b (a == b for within)."""
    t = trials_matrix(config.sizes, kind)[a, b]
    if t == 0:
        return 0.0
    km = kernel_moments(config.pair(a, b), params)
    return float(t) * km.mean


def _term_expectations(km, weighted: bool, within: bool,
                       cross_a: float, cross_b: float) -> dict[str, float]:
    m = km.mean
    matched = m + km.second if weighted else m
    return {
        "ij_ij": matched,
        "ij_ji": km.second,
        "ij_il": cross_a,
        "ij_kj": cross_b,
        # Within a group every shared-node pattern has the same law; the
        # remaining two classes never occur between distinct groups.
        "ij_ki": cross_a if within else 0.0,
        "ij_jl": cross_a if within else 0.0,
        "ij_kl": m * m,
    }


def _variance_from_table(config, params, kind, a, b) -> float:
    within = a == b
    km = kernel_moments(config.pair(a, b), params)
    if within:
        cross_a = cross_b = km.cross_common_a
        counts = term_coefficients(int(config.sizes[a]), None, kind)
    else:
        cross_a, cross_b = km.cross_common_a, km.cross_common_b
        counts = term_coefficients(int(config.sizes[a]),
                                   int(config.sizes[b]), kind)
    values = _term_expectations(km, kind.weighted, within, cross_a, cross_b)
    second = sum(counts[key] * values[key] for key in TERM_CLASSES)
    mean = aggregate_mean(config, params, kind, a, b)
    return second - mean * mean


def within_group_variance(config: GroupConfig, params: KernelParams,
                          kind: NetworkKind, a: int) -> float:
    """Variance of the diagonal volume Y_aa; zero for singleton groups."""
    return _variance_from_table(config, params, kind, a, a)


def between_group_variance(config: GroupConfig, params: KernelParams,
                           kind: NetworkKind, a: int, b: int) -> float:
    if a == b:
        raise ValueError("between-group variance needs two distinct groups")
    return _variance_from_table(config, params, kind, a, b)


def aggregate_moments(config: GroupConfig, params: KernelParams,
                      kind: NetworkKind) -> AggregateMoments:
    """Mean/variance/trial tables for every ordered group pair.

    Tables are symmetric for undirected networks by construction; for
    directed ones Y_ab and Y_ba share the same marginal law.
    """
    r = config.r
    mean = np.empty((r, r))
    var = np.empty((r, r))
    for a in range(r):
        for b in range(r):
            mean[a, b] = aggregate_mean(config, params, kind, a, b)
            var[a, b] = _variance_from_table(config, params, kind, a, b)
    return AggregateMoments(mean=mean, variance=var,
                            trials=trials_matrix(config.sizes, kind))
