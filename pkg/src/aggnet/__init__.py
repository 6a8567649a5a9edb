"""Latent space cluster models fitted to group-aggregated network data.

Instead of observing who connects to whom, only the volume of connections
between known groups is available.  This package computes the closed-form
mean and variance of those volumes under a Gaussian latent space model,
approximates each entry's marginal with a moment-matched count distribution,
and recovers cluster geometry by multi-restart MCMC on a symmetry-broken
parameterisation.
"""

from ._backend import HAVE_COMPILED, active_backend
from .inference import (AlignedPosterior, FitResult, PosteriorChain,
                        PosteriorSummary, SamplerConfig, align_posterior,
                        degeneracy_contour, fit, procrustes_align, run_chain,
                        summarize)
from .kernel import (ClusterPair, KernelMoments, KernelParams,
                     expected_kernel, gaussian_exp_identity,
                     kernel_cross_moment, kernel_moments,
                     kernel_second_moment, optimal_scale_sq)
from .likelihood import (AggregateMatrix, BetaBinomialParams,
                         MomentMatchError, NegBinomialParams,
                         approximate_log_likelihood, beta_binomial_log_pmf,
                         match_beta_binomial, match_negative_binomial,
                         neg_binomial_log_pmf)
from .model import (ModelParams, ParamLayout, PriorConfig,
                    UnconstrainedParams, eta_from_sigma, log_jacobian_eta,
                    log_posterior, log_prior, pack, posterior_evaluator,
                    sigma_from_eta, to_natural, to_unconstrained, unpack)
from .moments import (AggregateMoments, GroupConfig, NetworkKind,
                      aggregate_mean, aggregate_moments,
                      between_group_variance, term_coefficients,
                      trials_matrix, within_group_variance)
from .simulate import (MomentEstimate, NetworkRealization, aggregate,
                       enumerate_second_moment, mc_kernel_moments, mc_moments,
                       quadrature_gaussian_exp, simulate_network)

__version__ = "0.1.0"
