"""Hierarchical cluster model and its symmetry-broken parameterisation.

Natural parameters are the cluster centres ``mu`` (r x q), scales ``sigma``,
the centre prior scale ``tau``, and the connectivity ceiling ``theta``.
Sampling instead works on an unconstrained reparameterisation that pins the
rotation and translation freedom of the latent space:

* ``gamma``: centre offsets with ``gamma[a, s] = 0`` for ``s >= a`` (first
  centre at the origin, second on the first axis, and so on),
* ``nu``: a free global translation, so ``mu = gamma + nu``,
* ``eta`` in (0, 1) per group, with ``sigma = sqrt((eta^(-2/q) - 1) / 2)``;
  ``eta`` is exactly the factor by which a cluster's spread attenuates its
  own expected within-group connectivity,
* ``log tau`` and ``logit theta``.

Priors: Normal(0, tau^2) on every centre coordinate, half-Cauchy on sigma
(via eta, with the change-of-variables Jacobian) and on tau, uniform on
theta; nu is left flat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .kernel import KernelParams
from .likelihood import AggregateMatrix, approximate_log_likelihood
from .moments import GroupConfig

__all__ = [
    "ModelParams",
    "UnconstrainedParams",
    "PriorConfig",
    "ParamLayout",
    "sigma_from_eta",
    "eta_from_sigma",
    "log_jacobian_eta",
    "to_natural",
    "to_unconstrained",
    "log_prior",
    "log_posterior",
    "pack",
    "unpack",
    "natural_from_packed",
    "posterior_evaluator",
]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Natural parameters of the cluster model."""

    mu: np.ndarray
    sigma: np.ndarray
    tau: float
    theta: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.ndim != 2:
            raise ValueError("mu must be an (r, q) array")
        if sigma.shape != (mu.shape[0],):
            raise ValueError("sigma must have one entry per group")
        if np.any(sigma < 0):
            raise ValueError("sigma must be non-negative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def r(self) -> int:
        return self.mu.shape[0]

    @property
    def q(self) -> int:
        return self.mu.shape[1]


@dataclass(frozen=True, eq=False)
class UnconstrainedParams:
    """Symmetry-broken coordinates; see the module docstring for the map."""

    gamma: np.ndarray
    nu: np.ndarray
    eta: np.ndarray
    log_tau: float
    logit_theta: float

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if gamma.ndim != 2:
            raise ValueError("gamma must be an (r, q) array")
        r, q = gamma.shape
        if r < q:
            raise ValueError(
                f"need at least as many groups as latent dimensions, "
                f"got r={r} < q={q}")
        if nu.shape != (q,):
            raise ValueError("nu must be a length-q vector")
        if eta.shape != (r,):
            raise ValueError("eta must have one entry per group")
        if np.any((eta <= 0) | (eta >= 1)):
            raise ValueError("eta entries must lie strictly inside (0, 1)")
        if not (math.isfinite(self.log_tau)
                and math.isfinite(self.logit_theta)):
            raise ValueError("log_tau and logit_theta must be finite")
        for a in range(min(r, q + 1)):
            if np.any(gamma[a, a:] != 0.0):
                raise ValueError(
                    f"gamma row {a} must vanish from column {a} on")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "eta", eta)

    @property
    def r(self) -> int:
        return self.gamma.shape[0]

    @property
    def q(self) -> int:
        return self.gamma.shape[1]


@dataclass(frozen=True)
class PriorConfig:
    """Half-Cauchy scales of the two hierarchical spread parameters."""

    cauchy_scale_sigma: float = 1.0
    cauchy_scale_tau: float = 1.0

    def __post_init__(self):
        if self.cauchy_scale_sigma <= 0 or self.cauchy_scale_tau <= 0:
            raise ValueError("half-Cauchy scales must be positive")


def sigma_from_eta(eta, q: int):
    """Cluster scale whose self-attenuation factor is ``eta``."""
    eta = np.asarray(eta, dtype=float)
    if np.any((eta <= 0) | (eta >= 1)):
        raise ValueError("eta must lie strictly inside (0, 1)")
    # expm1 keeps precision as eta -> 1 (sigma -> 0).
    return np.sqrt(0.5 * np.expm1(-2.0 / q * np.log(eta)))


def eta_from_sigma(sigma, q: int):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    return np.exp(-0.5 * q * np.log1p(2.0 * sigma * sigma))


def log_jacobian_eta(eta, q: int):
    """log |d sigma / d eta|, the change-of-variables term for one group."""
    eta = np.asarray(eta, dtype=float)
    sigma = sigma_from_eta(eta, q)
    return (-2.0 / q - 1.0) * np.log(eta) - np.log(2.0 * q) - np.log(sigma)


def _trapezoid_violation(gamma: np.ndarray) -> float:
    r, q = gamma.shape
    worst = 0.0
    for a in range(min(r, q + 1)):
        if a < q:
            worst = max(worst, float(np.max(np.abs(gamma[a, a:]), initial=0.0)))
    return worst


def _canonical_rotation(offsets: np.ndarray) -> np.ndarray:
    """Rotation carrying centre offsets onto the pinned zero pattern.

    Row a of ``offsets @ R`` vanishes from column a on; obtained from a full
    QR factorisation of the first q-1 offset rows.
    """
    q = offsets.shape[1]
    lead = offsets[1:q].T  # columns spanning the first rows' directions
    full, _ = np.linalg.qr(np.hstack([lead, np.eye(q)]), mode="complete")
    rot = full[:, :q]
    if np.linalg.det(rot) < 0:
        rot = rot.copy()
        rot[:, -1] = -rot[:, -1]
    return rot


def to_natural(u: UnconstrainedParams, q: int | None = None) -> ModelParams:
    """Map unconstrained coordinates to natural parameters."""
    if q is not None and q != u.q:
        raise ValueError(f"q={q} does not match gamma's {u.q} columns")
    return ModelParams(
        mu=u.gamma + u.nu[np.newaxis, :],
        sigma=sigma_from_eta(u.eta, u.q),
        # math.exp raises OverflowError past ~709; saturate instead so the
        # posterior can reject the point with -inf rather than blow up.
        tau=math.exp(u.log_tau) if u.log_tau < 709.0 else math.inf,
        theta=float(expit(u.logit_theta)),
    )


def to_unconstrained(params: ModelParams) -> UnconstrainedParams:
    """Invert :func:`to_natural`.

    Centre configurations already compatible with the zero pattern map back
    exactly (round trip to machine precision); any other configuration is
    first carried onto the pattern by the rotation that pins it, which
    changes nothing observable.
    """
    if params.r < params.q:
        raise ValueError("need at least as many groups as latent dimensions")
    if params.theta in (0.0, 1.0):
        raise ValueError("boundary theta has no finite logit")
    if np.any(params.sigma == 0.0):
        raise ValueError("zero sigma has no valid attenuation factor")
    nu = params.mu[0].copy()
    gamma = params.mu - nu[np.newaxis, :]
    if _trapezoid_violation(gamma) > 0.0:
        gamma = gamma @ _canonical_rotation(gamma)
        residual = _trapezoid_violation(gamma)
        scale = float(np.max(np.abs(gamma), initial=1.0))
        if residual > 1e-9 * max(scale, 1.0):
            raise ValueError("could not rotate centres onto the zero pattern")
    r, q = gamma.shape
    for a in range(min(r, q + 1)):
        gamma[a, a:] = 0.0
    return UnconstrainedParams(
        gamma=gamma,
        nu=nu,
        eta=eta_from_sigma(params.sigma, q),
        log_tau=math.log(params.tau),
        logit_theta=float(logit(params.theta)),
    )


_LOG_2PI = math.log(2.0 * math.pi)


def _half_cauchy_logpdf(x, scale: float):
    return (math.log(2.0 / (math.pi * scale))
            - np.log1p((np.asarray(x) / scale) ** 2))


def log_prior(params: ModelParams, u: UnconstrainedParams,
              prior: PriorConfig) -> float:
    """Joint log prior density over the unconstrained coordinates.

    Natural-space densities (Normal centres, half-Cauchy scales, uniform
    theta) plus the log-Jacobians of the eta, log-tau, and logit-theta
    transforms; nu carries a flat prior and contributes nothing.
    """
    tau = params.tau
    theta = params.theta
    if theta <= 0.0 or theta >= 1.0:
        return -math.inf
    centres = (-0.5 * _LOG_2PI - math.log(tau)
               - params.mu ** 2 / (2.0 * tau * tau)).sum()
    scales = (_half_cauchy_logpdf(params.sigma, prior.cauchy_scale_sigma)
              + log_jacobian_eta(u.eta, u.q)).sum()
    spread = (_half_cauchy_logpdf(tau, prior.cauchy_scale_tau)
              + u.log_tau)
    ceiling = math.log(theta) + math.log1p(-theta)
    return float(centres + scales + spread + ceiling)


def log_posterior(u: UnconstrainedParams, data: AggregateMatrix,
                  prior: PriorConfig) -> float:
    """Unnormalised log posterior; the readable reference implementation.

    The sampling loop uses :func:`posterior_evaluator` instead, which
    computes the same value on packed vectors without dataclass traffic.
    """
    if u.r != data.r:
        raise ValueError(
            f"parameters describe {u.r} groups but data has {data.r}")
    params = to_natural(u)
    config = GroupConfig(sizes=data.sizes, centres=params.mu,
                         scales=params.sigma)
    kp = KernelParams(theta=params.theta, q=params.q)
    like = approximate_log_likelihood(data, config, kp)
    if like == -math.inf:
        return -math.inf
    return like + log_prior(params, u, prior)


@dataclass(frozen=True, eq=False)
class ParamLayout:
    """Packing order of the unconstrained coordinates into a flat vector.

    Free gamma entries come first (row-major over rows 1..r-1, columns
    0..min(row, q)-1), then nu, eta, log_tau, logit_theta.
    """

    r: int
    q: int
    free_rows: np.ndarray = field(init=False)
    free_cols: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be a positive integer")
        if self.r < self.q:
            raise ValueError(
                f"need at least as many groups as latent dimensions, "
                f"got r={self.r} < q={self.q}")
        rows, cols = [], []
        for a in range(1, self.r):
            for s in range(min(a, self.q)):
                rows.append(a)
                cols.append(s)
        object.__setattr__(self, "free_rows",
                           np.asarray(rows, dtype=np.intp))
        object.__setattr__(self, "free_cols",
                           np.asarray(cols, dtype=np.intp))

    @property
    def n_free(self) -> int:
        return self.free_rows.shape[0]

    @property
    def nu_offset(self) -> int:
        return self.n_free

    @property
    def eta_offset(self) -> int:
        return self.n_free + self.q

    @property
    def log_tau_offset(self) -> int:
        return self.eta_offset + self.r

    @property
    def logit_theta_offset(self) -> int:
        return self.log_tau_offset + 1

    @property
    def dim(self) -> int:
        return self.logit_theta_offset + 1

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        """Coordinate blocks updated jointly by the sampler."""
        out = []
        start = 0
        for a in range(1, self.r):
            width = min(a, self.q)
            out.append((f"gamma_row_{a}",
                        np.arange(start, start + width, dtype=np.intp)))
            start += width
        out.append(("nu", np.arange(self.nu_offset,
                                    self.nu_offset + self.q, dtype=np.intp)))
        out.append(("eta", np.arange(self.eta_offset,
                                     self.eta_offset + self.r, dtype=np.intp)))
        out.append(("log_tau",
                    np.asarray([self.log_tau_offset], dtype=np.intp)))
        out.append(("logit_theta",
                    np.asarray([self.logit_theta_offset], dtype=np.intp)))
        return out


def pack(u: UnconstrainedParams) -> np.ndarray:
    layout = ParamLayout(u.r, u.q)
    vec = np.empty(layout.dim)
    vec[:layout.n_free] = u.gamma[layout.free_rows, layout.free_cols]
    vec[layout.nu_offset:layout.eta_offset] = u.nu
    vec[layout.eta_offset:layout.log_tau_offset] = u.eta
    vec[layout.log_tau_offset] = u.log_tau
    vec[layout.logit_theta_offset] = u.logit_theta
    return vec


def unpack(vec: np.ndarray, layout: ParamLayout) -> UnconstrainedParams:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (layout.dim,):
        raise ValueError(
            f"expected a vector of length {layout.dim}, got {vec.shape}")
    gamma = np.zeros((layout.r, layout.q))
    gamma[layout.free_rows, layout.free_cols] = vec[:layout.n_free]
    return UnconstrainedParams(
        gamma=gamma,
        nu=vec[layout.nu_offset:layout.eta_offset].copy(),
        eta=vec[layout.eta_offset:layout.log_tau_offset].copy(),
        log_tau=float(vec[layout.log_tau_offset]),
        logit_theta=float(vec[layout.logit_theta_offset]),
    )


def natural_from_packed(draws: np.ndarray, layout: ParamLayout):
    """Vectorized unpack of many draws to (mu, sigma, tau, theta) arrays."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    n = draws.shape[0]
    gamma = np.zeros((n, layout.r, layout.q))
    gamma[:, layout.free_rows, layout.free_cols] = draws[:, :layout.n_free]
    nu = draws[:, layout.nu_offset:layout.eta_offset]
    mu = gamma + nu[:, np.newaxis, :]
    eta = draws[:, layout.eta_offset:layout.log_tau_offset]
    sigma = np.sqrt(0.5 * np.expm1(-2.0 / layout.q * np.log(eta)))
    tau = np.exp(draws[:, layout.log_tau_offset])
    theta = expit(draws[:, layout.logit_theta_offset])
    return mu, sigma, tau, theta


def posterior_evaluator(data: AggregateMatrix, q: int, prior: PriorConfig,
                        backend: str = "auto"):
    """Callable evaluating the log posterior on packed coordinate vectors.

    ``backend`` is "auto" (compiled if available), "compiled", or "python".
    The returned callable carries ``layout`` and ``backend_name`` attributes.
    """
    from . import _backend

    layout = ParamLayout(data.r, q)
    return _backend.make_evaluator(data, layout, prior, backend)
