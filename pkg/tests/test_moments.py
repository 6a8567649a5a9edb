"""Aggregate moment formulas: coefficient tables, hand examples, MC oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggnet.kernel import KernelParams
from aggnet.moments import (TERM_CLASSES, AggregateMoments, GroupConfig,
                            NetworkKind, aggregate_mean, aggregate_moments,
                            between_group_variance, term_coefficients,
                            trials_matrix, within_group_variance)
from aggnet.simulate import enumerate_second_moment, mc_moments

from conftest import ALL_KINDS, DIRECTED, DIRECTED_W, UNDIRECTED, UNDIRECTED_W


def point_config(sizes, theta_unused=None, q=2):
    """All groups coincident point masses; every kernel moment equals theta^k."""
    r = len(sizes)
    return GroupConfig(sizes=np.array(sizes), centres=np.zeros((r, q)),
                       scales=np.zeros(r))


class TestTermCoefficients:
    def test_directed_within_three(self):
        counts = term_coefficients(3, None, DIRECTED)
        assert counts == {"ij_ij": 6, "ij_ji": 6, "ij_il": 6, "ij_kj": 6,
                          "ij_ki": 6, "ij_jl": 6, "ij_kl": 0}
        assert sum(counts.values()) == 36

    def test_between_two_three(self):
        counts = term_coefficients(2, 3, DIRECTED)
        assert counts == {"ij_ij": 6, "ij_ji": 0, "ij_il": 12, "ij_kj": 6,
                          "ij_ki": 0, "ij_jl": 0, "ij_kl": 12}
        assert sum(counts.values()) == 36

    def test_undirected_within_four_total(self):
        counts = term_coefficients(4, None, UNDIRECTED)
        assert sum(counts.values()) == 36  # (4*3/2)^2

    def test_singleton_within_empty(self):
        counts = term_coefficients(1, None, DIRECTED)
        assert all(v == 0 for v in counts.values())

    @pytest.mark.parametrize("n", range(2, 7))
    def test_directed_within_total(self, n):
        assert sum(term_coefficients(n, None, DIRECTED).values()) \
            == n ** 2 * (n - 1) ** 2

    @pytest.mark.parametrize("n", range(2, 7))
    def test_undirected_within_total(self, n):
        assert sum(term_coefficients(n, None, UNDIRECTED).values()) \
            == n ** 2 * (n - 1) ** 2 // 4

    @pytest.mark.parametrize("na", range(1, 7))
    @pytest.mark.parametrize("nb", range(1, 6))
    def test_between_total(self, na, nb):
        assert sum(term_coefficients(na, nb, DIRECTED).values()) \
            == na ** 2 * nb ** 2

    @pytest.mark.parametrize("kind", [DIRECTED, UNDIRECTED],
                             ids=["dir", "undir"])
    @pytest.mark.parametrize("n", range(1, 7))
    def test_within_matches_enumeration(self, kind, n):
        assert term_coefficients(n, None, kind) \
            == enumerate_second_moment(n, None, kind)

    @pytest.mark.parametrize("kind", [DIRECTED, UNDIRECTED],
                             ids=["dir", "undir"])
    @pytest.mark.parametrize("na", range(1, 7))
    @pytest.mark.parametrize("nb", range(1, 7))
    def test_between_matches_enumeration(self, kind, na, nb):
        assert term_coefficients(na, nb, kind) \
            == enumerate_second_moment(na, nb, kind)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            term_coefficients(0, None, DIRECTED)
        with pytest.raises(ValueError):
            term_coefficients(3, 0, DIRECTED)

    def test_class_order_is_stable(self):
        # downstream code zips against this tuple
        assert TERM_CLASSES == ("ij_ij", "ij_ji", "ij_il", "ij_kj", "ij_ki",
                                "ij_jl", "ij_kl")


class TestTrials:
    def test_directed(self):
        t = trials_matrix(np.array([10, 15]), DIRECTED)
        assert t.tolist() == [[90, 150], [150, 210]]

    def test_undirected(self):
        t = trials_matrix(np.array([10, 15]), UNDIRECTED)
        assert t.tolist() == [[45, 150], [150, 105]]

    def test_singleton(self):
        assert trials_matrix(np.array([1]), DIRECTED)[0, 0] == 0


class TestAggregateMean:
    def test_within_saturated(self):
        cfg = point_config([10])
        kp = KernelParams(theta=1.0, q=2)
        assert aggregate_mean(cfg, kp, DIRECTED, 0, 0) == pytest.approx(90.0)

    def test_between_scaled(self):
        # point masses far enough apart that E[lambda] = 0.01 exactly
        delta = math.sqrt(-2.0 * math.log(0.01))
        cfg = GroupConfig(sizes=np.array([10, 15]),
                          centres=np.array([[0.0, 0.0], [delta, 0.0]]),
                          scales=np.zeros(2))
        kp = KernelParams(theta=1.0, q=2)
        assert aggregate_mean(cfg, kp, DIRECTED, 0, 1) == pytest.approx(
            1.5, rel=1e-12)

    def test_singleton_within_zero(self):
        cfg = point_config([1])
        assert aggregate_mean(cfg, KernelParams(theta=1.0, q=2),
                              DIRECTED, 0, 0) == 0.0

    def test_undirected_halves_trials(self):
        cfg = point_config([10])
        kp = KernelParams(theta=1.0, q=2)
        assert aggregate_mean(cfg, kp, UNDIRECTED, 0, 0) == pytest.approx(45.0)


class TestWithinVariance:
    def test_two_point_masses_binomial(self):
        cfg = point_config([2])
        kp = KernelParams(theta=0.5, q=2)
        assert within_group_variance(cfg, kp, DIRECTED, 0) == pytest.approx(
            0.5, rel=1e-12)

    def test_singleton_zero(self):
        cfg = point_config([1])
        assert within_group_variance(
            cfg, KernelParams(theta=0.5, q=2), DIRECTED, 0) == 0.0

    @pytest.mark.parametrize("kind,t", [(DIRECTED, 90), (UNDIRECTED, 45)])
    def test_point_masses_reduce_to_binomial(self, kind, t):
        # coincident sigma=0 clusters make all edges i.i.d. Bernoulli(theta)
        cfg = point_config([10])
        kp = KernelParams(theta=0.3, q=2)
        assert within_group_variance(cfg, kp, kind, 0) == pytest.approx(
            t * 0.3 * 0.7, rel=1e-12)

    def test_weighted_point_masses_poisson_like(self):
        # independent Poisson(theta) edges: variance = t * theta
        cfg = point_config([5])
        kp = KernelParams(theta=0.4, q=2)
        var = within_group_variance(cfg, kp, DIRECTED_W, 0)
        assert var == pytest.approx(20 * 0.4, rel=1e-12)


class TestBetweenVariance:
    def test_single_edge_bernoulli(self):
        cfg = point_config([1, 1])
        kp = KernelParams(theta=0.3, q=2)
        assert between_group_variance(cfg, kp, DIRECTED, 0, 1) == pytest.approx(
            0.3 * 0.7, rel=1e-12)

    def test_point_masses_any_sizes(self):
        delta = 1.3
        cfg = GroupConfig(sizes=np.array([4, 7]),
                          centres=np.array([[0.0, 0.0], [delta, 0.0]]),
                          scales=np.zeros(2))
        kp = KernelParams(theta=0.8, q=2)
        rho = 0.8 * math.exp(-delta ** 2 / 2.0)
        assert between_group_variance(cfg, kp, DIRECTED, 0, 1) == pytest.approx(
            28 * rho * (1.0 - rho), rel=1e-12)

    def test_same_group_rejected(self):
        cfg = point_config([3, 3])
        with pytest.raises(ValueError):
            between_group_variance(cfg, KernelParams(theta=0.5, q=2),
                                   DIRECTED, 1, 1)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=["dir", "undir", "dir-w",
                                                 "undir-w"])
class TestMonteCarloAgreement:
    """Analytic tables vs node-level simulation, diffuse two-cluster layout."""

    N_SIMS = 4000

    def test_within(self, kind, two_group_config):
        kp = KernelParams(theta=1.0, q=2)
        est = mc_moments(two_group_config, kp, kind, 0, 0, self.N_SIMS, seed=2)
        mean = aggregate_mean(two_group_config, kp, kind, 0, 0)
        var = within_group_variance(two_group_config, kp, kind, 0)
        assert abs(mean - est.mean_hat) < 4.0 * est.se_mean
        assert abs(var - est.var_hat) < 4.0 * est.se_var

    def test_between(self, kind, two_group_config):
        kp = KernelParams(theta=1.0, q=2)
        est = mc_moments(two_group_config, kp, kind, 0, 1, self.N_SIMS, seed=3)
        mean = aggregate_mean(two_group_config, kp, kind, 0, 1)
        var = between_group_variance(two_group_config, kp, kind, 0, 1)
        assert abs(mean - est.mean_hat) < 4.0 * est.se_mean
        assert abs(var - est.var_hat) < 4.0 * est.se_var


class TestMomentTables:
    def test_shapes_and_bounds(self, kind):
        rng = np.random.default_rng(5)
        cfg = GroupConfig(sizes=np.array([3, 1, 6]),
                          centres=rng.normal(0, 1, (3, 2)),
                          scales=np.array([0.5, 2.0, 0.0]))
        kp = KernelParams(theta=0.7, q=2)
        mom = aggregate_moments(cfg, kp, kind)
        assert isinstance(mom, AggregateMoments)
        assert mom.mean.shape == (3, 3)
        assert np.all(mom.mean >= 0)
        assert np.all(mom.variance >= -1e-12)
        if not kind.weighted:
            assert np.all(mom.mean <= mom.trials + 1e-9)
        assert np.array_equal(mom.trials, trials_matrix(cfg.sizes, kind))

    def test_exchange_symmetry(self):
        rng = np.random.default_rng(11)
        centres = rng.normal(0, 1, (2, 2))
        fwd = GroupConfig(sizes=np.array([4, 9]), centres=centres,
                          scales=np.array([0.5, 1.5]))
        rev = GroupConfig(sizes=np.array([9, 4]), centres=centres[::-1],
                          scales=np.array([1.5, 0.5]))
        kp = KernelParams(theta=0.6, q=2)
        for kind in ALL_KINDS:
            assert aggregate_mean(fwd, kp, kind, 0, 1) == pytest.approx(
                aggregate_mean(rev, kp, kind, 0, 1), rel=1e-12)
            assert between_group_variance(fwd, kp, kind, 0, 1) == pytest.approx(
                between_group_variance(rev, kp, kind, 0, 1), rel=1e-12)

    def test_weighted_tracks_unweighted_at_small_theta(self):
        theta = 1e-3
        cfg = GroupConfig(sizes=np.array([6, 8]),
                          centres=np.array([[0.0, 0.0], [1.0, 0.0]]),
                          scales=np.array([0.7, 1.2]))
        kp = KernelParams(theta=theta, q=2)
        for a, b, within in [(0, 0, True), (0, 1, False)]:
            mw = aggregate_mean(cfg, kp, DIRECTED_W, a, b)
            mu = aggregate_mean(cfg, kp, DIRECTED, a, b)
            assert mw == mu  # identical formula by construction
            vw = (within_group_variance(cfg, kp, DIRECTED_W, a) if within
                  else between_group_variance(cfg, kp, DIRECTED_W, a, b))
            vu = (within_group_variance(cfg, kp, DIRECTED, a) if within
                  else between_group_variance(cfg, kp, DIRECTED, a, b))
            # the families differ at O(theta) relative in the variance
            assert abs(vw - vu) / vu < 5.0 * theta

    @given(theta=st.floats(0.05, 1.0), delta=st.floats(0.0, 4.0),
           sa=st.floats(0.0, 3.0), sb=st.floats(0.0, 3.0),
           na=st.integers(1, 12), nb=st.integers(1, 12),
           directed=st.booleans(), weighted=st.booleans())
    @settings(max_examples=100, deadline=None)
    def test_variances_non_negative(self, theta, delta, sa, sb, na, nb,
                                    directed, weighted):
        cfg = GroupConfig(sizes=np.array([na, nb]),
                          centres=np.array([[0.0, 0.0], [delta, 0.0]]),
                          scales=np.array([sa, sb]))
        kp = KernelParams(theta=theta, q=2)
        kind = NetworkKind(directed=directed, weighted=weighted)
        assert within_group_variance(cfg, kp, kind, 0) >= -1e-9
        assert within_group_variance(cfg, kp, kind, 1) >= -1e-9
        assert between_group_variance(cfg, kp, kind, 0, 1) >= -1e-9


class TestGroupConfigValidation:
    def test_bad_centre_shape(self):
        with pytest.raises(ValueError):
            GroupConfig(sizes=np.array([2, 3]), centres=np.zeros((3, 2)),
                        scales=np.zeros(2))

    def test_bad_scale_length(self):
        with pytest.raises(ValueError):
            GroupConfig(sizes=np.array([2, 3]), centres=np.zeros((2, 2)),
                        scales=np.zeros(3))

    def test_zero_size(self):
        with pytest.raises(ValueError):
            GroupConfig(sizes=np.array([2, 0]), centres=np.zeros((2, 2)),
                        scales=np.zeros(2))

    def test_negative_scale(self):
        with pytest.raises(ValueError):
            GroupConfig(sizes=np.array([2]), centres=np.zeros((1, 2)),
                        scales=np.array([-0.5]))
