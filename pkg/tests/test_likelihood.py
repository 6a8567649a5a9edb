"""Moment matching, log-pmfs, and the aggregate likelihood.

Includes the frozen golden value for the full-matrix likelihood, produced by
a straight-line scipy reimplementation kept in this file; both the literal
and the reimplementation guard against silent drift.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import betabinom, binom, nbinom, poisson

from aggnet.kernel import KernelParams
from aggnet.likelihood import (EPSILON, AggregateMatrix, BetaBinomialParams,
                               MomentMatchError, NegBinomialParams,
                               aggregate_entry_log_pmf,
                               approximate_log_likelihood,
                               beta_binomial_log_pmf, match_beta_binomial,
                               match_negative_binomial, matrix_log_likelihood,
                               neg_binomial_log_pmf)
from aggnet.moments import GroupConfig, NetworkKind, aggregate_moments

from conftest import ALL_KINDS, DIRECTED, UNDIRECTED


class TestMatchBetaBinomial:
    def test_worked_example(self):
        p = match_beta_binomial(5.0, 5.0, 10)
        # f = 5 / (10 * 0.25) = 2, phi = (10 - 2) / (2 - 1) = 8
        assert p.alpha == pytest.approx(4.0, rel=1e-12)
        assert p.beta == pytest.approx(4.0, rel=1e-12)
        assert p.phi == pytest.approx(8.0, rel=1e-12)
        assert p.implied_mean == pytest.approx(5.0, rel=1e-12)
        assert p.implied_variance == pytest.approx(5.0, rel=1e-12)

    def test_equidispersed_clamps_to_binomial(self):
        p = match_beta_binomial(5.0, 2.5, 10)  # f = 1 exactly
        assert p.phi == pytest.approx(9.0 / EPSILON, rel=1e-9)
        ref = binom(10, 0.5)
        for y in range(11):
            assert beta_binomial_log_pmf(y, p) == pytest.approx(
                ref.logpmf(y), abs=1e-6)

    def test_underdispersed_clamps_too(self):
        p = match_beta_binomial(5.0, 1.25, 10)  # f = 0.5
        ref = binom(10, 0.5)
        for y in range(11):
            assert beta_binomial_log_pmf(y, p) == pytest.approx(
                ref.logpmf(y), abs=1e-6)

    @pytest.mark.parametrize("mean,var,trials", [
        (0.0, 1.0, 10), (-1.0, 1.0, 10), (10.0, 1.0, 10), (11.0, 1.0, 10),
        (5.0, 0.0, 10), (5.0, -2.0, 10), (0.5, 0.1, 0),
    ])
    def test_domain_errors(self, mean, var, trials):
        with pytest.raises(MomentMatchError) as exc:
            match_beta_binomial(mean, var, trials)
        assert exc.value.mean == mean
        assert exc.value.variance == var

    @given(trials=st.integers(2, 10_000),
           rho=st.floats(0.01, 0.99),
           f=st.floats(1.001, 50.0))
    @settings(max_examples=150, deadline=None)
    def test_moment_fidelity(self, trials, rho, f):
        f = min(f, trials - 1e-6)
        if f <= 1.001:
            return
        mean = rho * trials
        var = f * trials * rho * (1.0 - rho)
        p = match_beta_binomial(mean, var, trials)
        assert p.implied_mean == pytest.approx(mean, rel=1e-9)
        assert p.implied_variance == pytest.approx(var, rel=1e-9)

    def test_binomial_boundary_sweep(self):
        diffs = []
        ref = binom(20, 0.3)
        for f in (1.1, 1.01, 1.001, 1e-4 + 1.0, 1e-6 + 1.0):
            var = f * 20 * 0.3 * 0.7
            p = match_beta_binomial(6.0, var, 20)
            diffs.append(max(abs(beta_binomial_log_pmf(y, p) - ref.logpmf(y))
                             for y in range(21)))
        assert diffs[-1] < 1e-4
        assert all(a >= b - 1e-12 for a, b in zip(diffs, diffs[1:]))


class TestMatchNegBinomial:
    def test_worked_examples(self):
        p = match_negative_binomial(4.0, 8.0)
        assert p.size == pytest.approx(4.0, rel=1e-12)
        assert p.prob == pytest.approx(0.5, rel=1e-12)
        p = match_negative_binomial(2.0, 6.0)
        assert p.size == pytest.approx(1.0, rel=1e-12)
        assert p.prob == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_implied_moments(self):
        p = match_negative_binomial(4.0, 8.0)
        assert p.implied_mean == pytest.approx(4.0, rel=1e-12)
        assert p.implied_variance == pytest.approx(8.0, rel=1e-12)

    def test_poisson_limit(self):
        p = match_negative_binomial(4.0, 4.0)
        ref = poisson(4.0)
        for y in range(31):
            assert neg_binomial_log_pmf(y, p) == pytest.approx(
                ref.logpmf(y), abs=1e-6)

    def test_underdispersed_keeps_mean(self):
        p = match_negative_binomial(10.0, 5.0)
        assert p.implied_mean == pytest.approx(10.0, rel=1e-9)

    @pytest.mark.parametrize("mean,var", [(0.0, 1.0), (-1.0, 1.0),
                                          (1.0, 0.0), (1.0, -1.0)])
    def test_domain_errors(self, mean, var):
        with pytest.raises(MomentMatchError):
            match_negative_binomial(mean, var)

    @given(mean=st.floats(0.01, 1e4), ratio=st.floats(1.001, 100.0))
    @settings(max_examples=150, deadline=None)
    def test_moment_fidelity(self, mean, ratio):
        var = mean * ratio
        p = match_negative_binomial(mean, var)
        assert p.implied_mean == pytest.approx(mean, rel=1e-9)
        assert p.implied_variance == pytest.approx(var, rel=1e-9)


class TestLogPmfs:
    def test_empty_support(self):
        assert beta_binomial_log_pmf(
            0, BetaBinomialParams(trials=0, alpha=1.0, beta=1.0)) == 0.0

    def test_uniform_on_two_points(self):
        p = BetaBinomialParams(trials=1, alpha=1.0, beta=1.0)
        assert beta_binomial_log_pmf(0, p) == pytest.approx(math.log(0.5))
        assert beta_binomial_log_pmf(1, p) == pytest.approx(math.log(0.5))

    def test_out_of_range(self):
        p = BetaBinomialParams(trials=5, alpha=2.0, beta=3.0)
        assert beta_binomial_log_pmf(-1, p) == -math.inf
        assert beta_binomial_log_pmf(6, p) == -math.inf
        nb = NegBinomialParams(size=2.0, prob=0.5)
        assert neg_binomial_log_pmf(-1, nb) == -math.inf

    def test_bb_normalisation(self):
        p = BetaBinomialParams(trials=10, alpha=4.0, beta=4.0)
        total = sum(math.exp(beta_binomial_log_pmf(y, p)) for y in range(11))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_matched_bb_normalisation_large_trials(self):
        t = 10_000
        p = match_beta_binomial(400.0, 800.0, t)
        total = sum(math.exp(beta_binomial_log_pmf(y, p))
                    for y in range(t + 1))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_matched_nb_normalisation(self):
        p = match_negative_binomial(40.0, 90.0)
        total = sum(math.exp(neg_binomial_log_pmf(y, p)) for y in range(2000))
        assert total == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("t,alpha,beta", [(30, 2.5, 7.0), (12, 40.0, 1.5),
                                              (50, 0.3, 0.9)])
    def test_bb_matches_scipy_moderate(self, t, alpha, beta):
        p = BetaBinomialParams(trials=t, alpha=alpha, beta=beta)
        for y in range(t + 1):
            assert beta_binomial_log_pmf(y, p) == pytest.approx(
                betabinom.logpmf(y, t, alpha, beta), rel=1e-9, abs=1e-9)

    def test_bb_rising_branch_matches_scipy(self):
        # concentration just past the switch to the rising-factorial path
        p = BetaBinomialParams(trials=50, alpha=1.5e6, beta=0.5e6)
        for y in (0, 3, 37, 50):
            assert beta_binomial_log_pmf(y, p) == pytest.approx(
                betabinom.logpmf(y, 50, 1.5e6, 0.5e6), abs=1e-6)

    @pytest.mark.parametrize("size,prob", [(3.5, 0.4), (0.8, 0.9),
                                           (20.0, 0.05)])
    def test_nb_matches_scipy(self, size, prob):
        p = NegBinomialParams(size=size, prob=prob)
        for y in range(40):
            assert neg_binomial_log_pmf(y, p) == pytest.approx(
                nbinom.logpmf(y, size, prob), rel=1e-9, abs=1e-9)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            BetaBinomialParams(trials=-1, alpha=1.0, beta=1.0)
        with pytest.raises(ValueError):
            BetaBinomialParams(trials=3, alpha=0.0, beta=1.0)
        with pytest.raises(ValueError):
            NegBinomialParams(size=0.0, prob=0.5)
        with pytest.raises(ValueError):
            NegBinomialParams(size=1.0, prob=0.0)

    def test_nb_prob_one_point_mass(self):
        p = NegBinomialParams(size=2.0, prob=1.0)
        assert neg_binomial_log_pmf(0, p) == 0.0
        assert neg_binomial_log_pmf(1, p) == -math.inf


class TestEntryLogPmf:
    def test_degenerate_zero_trials(self):
        assert aggregate_entry_log_pmf(0, 0.0, 0.0, 0, False) == 0.0
        assert aggregate_entry_log_pmf(1, 0.0, 0.0, 0, False) == -math.inf

    def test_degenerate_zero_mean(self):
        assert aggregate_entry_log_pmf(0, 0.0, 0.0, 10, False) == 0.0
        assert aggregate_entry_log_pmf(2, 0.0, 0.0, 10, False) == -math.inf
        assert aggregate_entry_log_pmf(0, 0.0, 0.0, 0, True) == 0.0
        assert aggregate_entry_log_pmf(3, -1.0, 1.0, 0, True) == -math.inf

    def test_degenerate_saturated_mean(self):
        assert aggregate_entry_log_pmf(10, 10.0, 1.0, 10, False) == 0.0
        assert aggregate_entry_log_pmf(9, 10.0, 1.0, 10, False) == -math.inf


class TestAggregateMatrix:
    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            AggregateMatrix(counts=np.zeros((2, 3), dtype=int),
                            sizes=np.array([2, 3]), kind=DIRECTED)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            AggregateMatrix(counts=np.array([[-1]]), sizes=np.array([3]),
                            kind=DIRECTED)

    def test_rejects_fractional(self):
        with pytest.raises(ValueError):
            AggregateMatrix(counts=np.array([[0.5]]), sizes=np.array([3]),
                            kind=DIRECTED)

    def test_accepts_integral_floats(self):
        m = AggregateMatrix(counts=np.array([[2.0]]), sizes=np.array([3]),
                            kind=DIRECTED)
        assert m.counts.dtype == np.int64

    def test_rejects_asymmetric_undirected(self):
        with pytest.raises(ValueError):
            AggregateMatrix(counts=np.array([[0, 1], [2, 0]]),
                            sizes=np.array([2, 2]), kind=UNDIRECTED)

    def test_rejects_overfull_unweighted(self):
        with pytest.raises(ValueError, match="exceeds"):
            AggregateMatrix(counts=np.array([[7]]), sizes=np.array([3]),
                            kind=DIRECTED)

    def test_weighted_unbounded(self):
        m = AggregateMatrix(counts=np.array([[1000]]), sizes=np.array([3]),
                            kind=NetworkKind(directed=True, weighted=True))
        assert m.counts[0, 0] == 1000

    def test_trials_property(self):
        m = AggregateMatrix(counts=np.zeros((2, 2), dtype=int),
                            sizes=np.array([10, 15]), kind=DIRECTED)
        assert m.trials.tolist() == [[90, 150], [150, 210]]


GOLDEN_CONFIG = dict(
    sizes=np.array([4, 6, 5]),
    centres=np.array([[0.0, 0.0], [1.5, 0.5], [-1.0, 1.0]]),
    scales=np.array([0.4, 0.9, 0.6]),
)
GOLDEN_COUNTS = np.array([[5, 9, 6], [7, 11, 4], [8, 3, 9]])
# scipy reimplementation value, pinned; see straight_line_loglik below
GOLDEN_VALUE = -21.513839171136304


def straight_line_loglik():
    """Independent recomputation of the golden fixture from first principles."""
    theta, q = 0.7, 2
    sizes = GOLDEN_CONFIG["sizes"]
    centres = GOLDEN_CONFIG["centres"]
    scales = GOLDEN_CONFIG["scales"]

    def kmean(d2, va, vb):
        v = va + vb
        return theta * (1 + v) ** (-q / 2) * math.exp(-d2 / (2 * (1 + v)))

    def ksecond(d2, va, vb):
        v = 2 * (va + vb)
        return theta ** 2 * (1 + v) ** (-q / 2) * math.exp(-d2 / (1 + v))

    def kcross(d2, vs, vo):
        w = 2 * vs + vo
        return (theta ** 2 * ((1 + w) * (1 + vo)) ** (-q / 2)
                * math.exp(-d2 / (1 + w)))

    total = 0.0
    for a in range(3):
        for b in range(3):
            d2 = float(np.sum((centres[a] - centres[b]) ** 2))
            va, vb = scales[a] ** 2, scales[b] ** 2
            m = kmean(d2, va, vb)
            s2 = ksecond(d2, va, vb)
            if a == b:
                n = int(sizes[a])
                t = n * (n - 1)
                c = kcross(0.0, va, va)
                var = t * (m * (1 - m) + (s2 - m * m)
                           + 4 * (n - 2) * (c - m * m))
            else:
                na, nb = int(sizes[a]), int(sizes[b])
                t = na * nb
                ca, cb = kcross(d2, va, vb), kcross(d2, vb, va)
                var = t * (m * (1 - m) + (nb - 1) * (ca - m * m)
                           + (na - 1) * (cb - m * m))
            f = var / (t * m * (1 - m))
            phi = (t - f) / (f - 1.0)
            total += float(betabinom.logpmf(GOLDEN_COUNTS[a, b], t,
                                            m * phi, (1 - m) * phi))
    return total


class TestApproximateLogLikelihood:
    def test_single_edge_binomial_limit(self):
        cfg = GroupConfig(sizes=np.array([2]), centres=np.zeros((1, 2)),
                          scales=np.zeros(1))
        data = AggregateMatrix(counts=np.array([[1]]), sizes=np.array([2]),
                               kind=DIRECTED)
        val = approximate_log_likelihood(data, cfg,
                                         KernelParams(theta=0.5, q=2))
        assert val == pytest.approx(math.log(0.5), abs=1e-6)

    def test_golden_fixture(self):
        cfg = GroupConfig(**GOLDEN_CONFIG)
        data = AggregateMatrix(counts=GOLDEN_COUNTS,
                               sizes=GOLDEN_CONFIG["sizes"], kind=DIRECTED)
        val = approximate_log_likelihood(data, cfg,
                                         KernelParams(theta=0.7, q=2))
        assert val == pytest.approx(GOLDEN_VALUE, rel=1e-10)
        assert straight_line_loglik() == pytest.approx(GOLDEN_VALUE, rel=1e-10)

    def test_factorises_over_entries(self):
        cfg = GroupConfig(**GOLDEN_CONFIG)
        kp = KernelParams(theta=0.7, q=2)
        data = AggregateMatrix(counts=GOLDEN_COUNTS,
                               sizes=GOLDEN_CONFIG["sizes"], kind=DIRECTED)
        mom = aggregate_moments(cfg, kp, DIRECTED)
        manual = sum(
            aggregate_entry_log_pmf(int(GOLDEN_COUNTS[a, b]),
                                    mom.mean[a, b], mom.variance[a, b],
                                    int(mom.trials[a, b]), False)
            for a in range(3) for b in range(3))
        assert approximate_log_likelihood(data, cfg, kp) == pytest.approx(
            manual, rel=1e-14)

    def test_theta_zero_with_edges_impossible(self):
        cfg = GroupConfig(sizes=np.array([3]), centres=np.zeros((1, 2)),
                          scales=np.zeros(1))
        data = AggregateMatrix(counts=np.array([[2]]), sizes=np.array([3]),
                               kind=DIRECTED)
        assert approximate_log_likelihood(
            data, cfg, KernelParams(theta=0.0, q=2)) == -math.inf

    def test_theta_zero_no_edges_certain(self):
        cfg = GroupConfig(sizes=np.array([3]), centres=np.zeros((1, 2)),
                          scales=np.zeros(1))
        data = AggregateMatrix(counts=np.array([[0]]), sizes=np.array([3]),
                               kind=DIRECTED)
        assert approximate_log_likelihood(
            data, cfg, KernelParams(theta=0.0, q=2)) == 0.0

    def test_size_mismatch(self):
        cfg = GroupConfig(**GOLDEN_CONFIG)
        data = AggregateMatrix(counts=np.zeros((2, 2), dtype=int),
                               sizes=np.array([4, 6]), kind=DIRECTED)
        with pytest.raises(ValueError):
            approximate_log_likelihood(data, cfg,
                                       KernelParams(theta=0.7, q=2))

    def test_monotone_mean_in_theta(self):
        cfg = GroupConfig(**GOLDEN_CONFIG)
        means = []
        for theta in (0.2, 0.4, 0.6, 0.8):
            mom = aggregate_moments(cfg, KernelParams(theta=theta, q=2),
                                    DIRECTED)
            means.append(mom.mean)
        for lo, hi in zip(means, means[1:]):
            assert np.all(hi > lo)


class TestMatrixTwin:
    """The vectorized likelihood must agree with the scalar loop exactly."""

    @pytest.mark.parametrize("kind", ALL_KINDS,
                             ids=["dir", "undir", "dir-w", "undir-w"])
    def test_random_fixtures(self, kind, rng):
        for _ in range(10):
            r = int(rng.integers(1, 5))
            sizes = rng.integers(1, 9, r)
            cfg = GroupConfig(sizes=sizes, centres=rng.normal(0, 1.5, (r, 2)),
                              scales=rng.uniform(0.0, 2.0, r))
            kp = KernelParams(theta=float(rng.uniform(0.05, 0.95)), q=2)
            mom = aggregate_moments(cfg, kp, kind)
            hi = np.maximum(mom.mean.astype(int) * 2 + 2, 1)
            if not kind.weighted:
                hi = np.minimum(hi, mom.trials + 1)
            counts = rng.integers(0, hi)
            if not kind.directed:
                counts = np.triu(counts) + np.triu(counts, 1).T
            data = AggregateMatrix(counts=counts, sizes=sizes, kind=kind)
            scalar = approximate_log_likelihood(data, cfg, kp)
            vector = matrix_log_likelihood(data.counts, mom.mean,
                                           mom.variance, mom.trials, kind)
            assert vector == pytest.approx(scalar, rel=1e-12)

    def test_impossible_point_mass(self):
        # zero mean with a positive count must be -inf in both paths
        mean = np.array([[0.0]])
        var = np.array([[0.0]])
        trials = np.array([[6]])
        counts = np.array([[2]])
        assert matrix_log_likelihood(counts, mean, var, trials,
                                     DIRECTED) == -math.inf
