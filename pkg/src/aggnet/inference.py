"""Posterior sampling, restart selection, alignment, and summaries.

The sampler is a blockwise random-walk Metropolis chain on the packed
unconstrained coordinates: each parameter block (one centre row, the
translation, the attenuation vector, the two scalars) gets an isotropic
Gaussian proposal whose scale adapts by Robbins-Monro during warmup only
and is frozen afterwards.  Multimodality from residual symmetry (e.g. two
similar groups swapping places) is handled by independent restarts: run
several seeded chains and keep the one with the highest median log density.

Rotation indeterminacy within a chain is removed after the fact by aligning
every centre draw onto a reference draw with the optimal proper rotation
and translation (no scaling).
"""

from __future__ import annotations

import hashlib
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .likelihood import AggregateMatrix
from .model import ParamLayout, PriorConfig, natural_from_packed, posterior_evaluator, unpack

__all__ = [
    "DEFAULT_STEP_SCALES",
    "SamplerConfig",
    "PosteriorChain",
    "FitResult",
    "AlignedPosterior",
    "PosteriorSummary",
    "InitialisationError",
    "adaptive_metropolis",
    "run_chain",
    "fit",
    "select_best",
    "rotation_align",
    "procrustes_align",
    "align_posterior",
    "summarize",
    "degeneracy_contour",
]

DEFAULT_STEP_SCALES = {
    "gamma": 0.2,
    "nu": 0.2,
    "eta": 0.05,
    "log_tau": 0.2,
    "logit_theta": 0.2,
}

_INIT_RETRIES = 100


class InitialisationError(RuntimeError):
    """No finite-density starting point found within the retry budget."""


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 10
    n_warmup: int = 2000
    n_samples: int = 2000
    seed: int = 0
    adapt_target: float = 0.3
    initial_step_scales: dict = field(default_factory=dict)
    n_jobs: int = 1
    # Optional per-chain starting vectors (packed); None draws them.
    init: tuple = None

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("need at least one chain")
        if self.n_warmup < 0 or self.n_samples < 1:
            raise ValueError("warmup must be >= 0 and samples >= 1")
        if not 0.05 < self.adapt_target < 0.95:
            raise ValueError("adapt_target must be a plausible acceptance rate")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be positive")
        if self.init is not None and len(self.init) != self.n_chains:
            raise ValueError("init must supply one vector per chain")

    def step_scale(self, name: str) -> float:
        key = "gamma" if name.startswith("gamma") else name
        return float(self.initial_step_scales.get(key,
                                                  DEFAULT_STEP_SCALES[key]))


@dataclass(frozen=True, eq=False)
class PosteriorChain:
    """Post-warmup draws of one chain, packed row per draw."""

    draws: np.ndarray
    log_densities: np.ndarray
    acceptance_rate: float
    seed: int
    r: int
    q: int
    step_scales: np.ndarray
    # Digest of the frozen proposal scales at warmup end and at chain end;
    # equal iff sampling ran with an unchanged transition kernel.
    kernel_digest_postwarmup: str
    kernel_digest_end: str

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def median_log_density(self) -> float:
        return float(np.median(self.log_densities))

    def unconstrained(self, i: int):
        return unpack(self.draws[i], ParamLayout(self.r, self.q))


@dataclass(frozen=True, eq=False)
class FitResult:
    best: PosteriorChain
    chains: tuple
    best_index: int
    median_log_densities: np.ndarray
    # Median log-density margin of the winner over the runner-up; None for
    # a single chain.
    density_gap: float


@dataclass(frozen=True, eq=False)
class AlignedPosterior:
    """Draws with the rotation/translation symmetry quotiented out."""

    centres: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    theta: np.ndarray
    log_densities: np.ndarray
    reference: np.ndarray
    used_identity: np.ndarray

    @property
    def n_draws(self) -> int:
        return self.centres.shape[0]


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    names: tuple
    mean: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    map_centres: np.ndarray
    radius_2sigma: np.ndarray
    n_draws: int


def _digest(scales: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(scales).tobytes()).hexdigest()


def adaptive_metropolis(log_density, start: np.ndarray, blocks, scales,
                        n_warmup: int, n_samples: int, rng: np.random.Generator,
                        adapt_target: float = 0.3):
    """Blockwise random-walk Metropolis with warmup-only scale adaptation.

    ``blocks`` is a list of index arrays into the state vector; ``scales``
    the matching initial proposal scales.  Returns draws, their log
    densities, the pooled post-warmup acceptance rate, the frozen scales,
    and the two kernel digests bracketing the sampling phase.
    """
    x = np.array(start, dtype=float)
    lp = float(log_density(x))
    if not math.isfinite(lp):
        raise ValueError("starting point has non-finite log density")
    blocks = [np.asarray(b, dtype=np.intp) for b in blocks]
    log_scales = np.log(np.asarray(scales, dtype=float))
    draws = np.empty((n_samples, x.shape[0]))
    logds = np.empty(n_samples)
    accepted = 0
    proposed = 0
    digest_postwarmup = _digest(np.exp(log_scales)) if n_warmup == 0 else None
    for it in range(n_warmup + n_samples):
        warm = it < n_warmup
        for b, idx in enumerate(blocks):
            prop = x.copy()
            prop[idx] += math.exp(log_scales[b]) * rng.standard_normal(idx.size)
            lpp = float(log_density(prop))
            delta = lpp - lp
            u = rng.random()
            accept = delta > (math.log(u) if u > 0.0 else -math.inf)
            if accept:
                x = prop
                lp = lpp
            if warm:
                # Robbins-Monro on the expected acceptance probability.
                alpha = math.exp(min(0.0, delta))
                log_scales[b] += (it + 1.0) ** -0.6 * (alpha - adapt_target)
            else:
                accepted += accept
                proposed += 1
        if warm and it == n_warmup - 1:
            digest_postwarmup = _digest(np.exp(log_scales))
        if not warm:
            draws[it - n_warmup] = x
            logds[it - n_warmup] = lp
    digest_end = _digest(np.exp(log_scales))
    rate = accepted / proposed if proposed else 0.0
    return draws, logds, rate, np.exp(log_scales), digest_postwarmup, digest_end


def _draw_initial(layout: ParamLayout, rng: np.random.Generator) -> np.ndarray:
    vec = 0.1 * rng.standard_normal(layout.dim)
    # eta lives in (0, 1): squash its slice instead of using the raw draw.
    sl = slice(layout.eta_offset, layout.log_tau_offset)
    vec[sl] = expit(vec[sl])
    return vec


def run_chain(data: AggregateMatrix, q: int, config: SamplerConfig,
              prior: PriorConfig, seed, init: np.ndarray = None,
              backend: str = "auto") -> PosteriorChain:
    """Run one adaptive Metropolis chain on the model posterior.

    ``seed`` may be an integer or a ``numpy.random.SeedSequence``.  ``init``
    overrides the random starting point (packed unconstrained coordinates).
    """
    evaluator = posterior_evaluator(data, q, prior, backend)
    layout = evaluator.layout
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    if init is not None:
        start = np.asarray(init, dtype=float)
        if not math.isfinite(evaluator(start)):
            raise InitialisationError(
                "supplied starting point has non-finite log density")
    else:
        for _ in range(_INIT_RETRIES):
            start = _draw_initial(layout, rng)
            if math.isfinite(evaluator(start)):
                break
        else:
            raise InitialisationError(
                f"no finite starting point in {_INIT_RETRIES} attempts")
    named_blocks = layout.blocks()
    blocks = [idx for _, idx in named_blocks]
    scales = [config.step_scale(name) for name, _ in named_blocks]
    draws, logds, rate, final_scales, dig_warm, dig_end = adaptive_metropolis(
        evaluator, start, blocks, scales, config.n_warmup, config.n_samples,
        rng, config.adapt_target)
    return PosteriorChain(
        draws=draws, log_densities=logds, acceptance_rate=rate,
        seed=seed_seq.entropy if isinstance(seed_seq.entropy, int) else seed,
        r=layout.r, q=layout.q, step_scales=final_scales,
        kernel_digest_postwarmup=dig_warm, kernel_digest_end=dig_end)


def select_best(chains) -> tuple[int, float]:
    """Index of the highest-median-density chain and its margin.

    The margin is the median log-density gap to the runner-up; None when
    there is only one chain.
    """
    medians = np.asarray([c.median_log_density for c in chains])
    best = int(np.argmax(medians))
    if medians.shape[0] < 2:
        return best, None
    rest = np.delete(medians, best)
    return best, float(medians[best] - np.max(rest))


def fit(data: AggregateMatrix, q: int, config: SamplerConfig = SamplerConfig(),
        prior: PriorConfig = PriorConfig(), backend: str = "auto") -> FitResult:
    """Multi-restart fit: independent chains, keep the best by median density.

    Chain seeds are spawned from ``config.seed`` so the result does not
    depend on whether chains run serially or on ``n_jobs`` threads.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    inits = config.init if config.init is not None else [None] * config.n_chains

    def one(i):
        return run_chain(data, q, config, prior, seeds[i], inits[i], backend)

    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            chains = tuple(pool.map(one, range(config.n_chains)))
    else:
        chains = tuple(one(i) for i in range(config.n_chains))
    best, gap = select_best(chains)
    return FitResult(
        best=chains[best], chains=chains, best_index=best,
        median_log_densities=np.asarray(
            [c.median_log_density for c in chains]),
        density_gap=gap)


def rotation_align(sample: np.ndarray,
                   reference: np.ndarray) -> tuple[np.ndarray, bool]:
    """Best proper rotation + translation of ``sample`` onto ``reference``.

    Least-squares over rigid motions only (no scaling, no reflection).
    A rank-deficient cross-covariance leaves the rotation ambiguous; the
    identity is used and flagged.
    """
    sample = np.asarray(sample, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if sample.shape != reference.shape:
        raise ValueError("sample and reference shapes differ")
    ctr_s = sample.mean(axis=0)
    ctr_r = reference.mean(axis=0)
    xs = sample - ctr_s
    xr = reference - ctr_r
    cross = xs.T @ xr
    u, s, vt = np.linalg.svd(cross)
    degenerate = s[0] <= 0.0 or (s.shape[0] > 1
                                 and s[-1] <= 1e-12 * s[0])
    if degenerate:
        return xs + ctr_r, True
    if np.linalg.det(u @ vt) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
    return xs @ (u @ vt) + ctr_r, False


def procrustes_align(samples, reference: np.ndarray, sigma=None, tau=None,
                     theta=None, log_densities=None) -> AlignedPosterior:
    """Align a stack of centre draws onto a common reference configuration."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3:
        raise ValueError("samples must be a (draws, r, q) stack")
    n = samples.shape[0]
    centres = np.empty_like(samples)
    used_identity = np.zeros(n, dtype=bool)
    for i in range(n):
        centres[i], used_identity[i] = rotation_align(samples[i], reference)
    if np.any(used_identity):
        warnings.warn(
            f"{int(used_identity.sum())} of {n} draws had a degenerate "
            "centre configuration; identity rotation used",
            RuntimeWarning, stacklevel=2)

    def _arr(x, shape):
        return np.full(shape, np.nan) if x is None else np.asarray(x, float)

    return AlignedPosterior(
        centres=centres,
        sigma=_arr(sigma, (n, samples.shape[1])),
        tau=_arr(tau, n),
        theta=_arr(theta, n),
        log_densities=_arr(log_densities, n),
        reference=np.asarray(reference, dtype=float),
        used_identity=used_identity)


def align_posterior(chain: PosteriorChain) -> AlignedPosterior:
    """Align a chain's centre draws onto its highest-density draw."""
    layout = ParamLayout(chain.r, chain.q)
    mu, sigma, tau, theta = natural_from_packed(chain.draws, layout)
    reference = mu[int(np.argmax(chain.log_densities))]
    return procrustes_align(mu, reference, sigma=sigma, tau=tau, theta=theta,
                            log_densities=chain.log_densities)


def summarize(aligned: AlignedPosterior) -> PosteriorSummary:
    """Posterior location/interval table plus plotting geometry.

    Central 95% intervals per scalar parameter; circle geometry per group:
    the centre of the single highest-density draw and a radius of twice the
    posterior mean scale.
    """
    n = aligned.n_draws
    if n < 100:
        raise ValueError(f"need at least 100 draws to summarise, got {n}")
    r, q = aligned.reference.shape
    names = ([f"mu_{g}_{s}" for g in range(r) for s in range(q)]
             + [f"sigma_{g}" for g in range(r)] + ["tau", "theta"])
    values = np.hstack([
        aligned.centres.reshape(n, r * q),
        aligned.sigma,
        aligned.tau[:, np.newaxis],
        aligned.theta[:, np.newaxis],
    ])
    lower, upper = np.percentile(values, [2.5, 97.5], axis=0)
    map_idx = int(np.argmax(aligned.log_densities))
    return PosteriorSummary(
        names=tuple(names),
        mean=values.mean(axis=0),
        median=np.median(values, axis=0),
        lower=lower,
        upper=upper,
        map_centres=aligned.centres[map_idx].copy(),
        radius_2sigma=2.0 * aligned.sigma.mean(axis=0),
        n_draws=n)


def degeneracy_contour(edge_density: float, q: int,
                       theta_grid) -> np.ndarray:
    """(theta, tau) pairs where a single diffuse blob matches a flat density.

    Centres drawn from a common Normal(0, tau^2) cloud produce an average
    connection rate theta (1 + 2 tau^2)^(-q/2); solving that equal to the
    observed edge density traces the ridge along which the model cannot
    distinguish structure from spread.  Grid values below the density have
    no solution and are omitted.
    """
    if not 0.0 < edge_density < 1.0:
        raise ValueError("edge density must lie strictly inside (0, 1)")
    if q < 1:
        raise ValueError("q must be a positive integer")
    out = []
    for theta in np.asarray(theta_grid, dtype=float):
        if theta < edge_density:
            continue
        tau = math.sqrt(0.5 * max(
            math.expm1(2.0 / q * math.log(theta / edge_density)), 0.0))
        out.append((theta, tau))
    return np.asarray(out).reshape(-1, 2)
