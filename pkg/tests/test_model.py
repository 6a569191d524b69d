import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invdirmix import (
    ElboTrace,
    InvertedDirichletParams,
    MixtureEstimate,
    PositiveDataset,
    PriorConfig,
    VariationalPosterior,
    posterior_point_estimates,
    stick_breaking_weights,
)
from invdirmix.model import build_estimate


class TestPositiveDataset:
    def test_valid(self):
        d = PositiveDataset(np.array([[1.0, 2.0], [0.5, 3.0]]))
        assert d.n == 2 and d.dim == 2

    @pytest.mark.parametrize(
        "bad",
        [
            np.array([[1.0, 0.0]]),
            np.array([[1.0, -2.0]]),
            np.array([[1.0, np.inf]]),
            np.zeros((0, 3)),
            np.array([1.0, 2.0]),
        ],
    )
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            PositiveDataset(bad)


class TestPriorConfig:
    def test_defaults_match_experiment_settings(self):
        cfg = PriorConfig()
        assert cfg.truncation_M == 15
        assert cfg.s0 == 1.0 and cfg.u0 == 1.0
        assert cfg.t0 == 0.005 and cfg.v0 == 0.005
        assert cfg.prune_threshold == 1e-5

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"truncation_M": 1},
            {"s0": 0.0},
            {"t0": -1.0},
            {"prune_threshold": 0.0},
            {"prune_threshold": 1.0},
            {"max_iterations": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            PriorConfig(**kwargs)


class TestStickBreakingWeights:
    def test_hand_computed(self):
        assert np.allclose(stick_breaking_weights([0.5, 0.5, 1.0]), [0.5, 0.25, 0.25])
        assert np.allclose(stick_breaking_weights([1.0]), [1.0])
        assert np.allclose(
            stick_breaking_weights([0.25, 0.25, 0.25, 1.0]),
            [0.25, 0.1875, 0.140625, 0.421875],
        )

    def test_unit_sum_with_final_one(self):
        lam = np.array([0.3, 0.7, 0.123, 1.0])
        assert stick_breaking_weights(lam).sum() == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("bad", [[0.0, 0.5], [0.5, 1.2], [-0.1], [np.nan, 0.5]])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            stick_breaking_weights(bad)

    @given(
        st.lists(st.floats(min_value=1e-9, max_value=1.0), min_size=1, max_size=20)
    )
    @settings(max_examples=200, deadline=None)
    def test_sub_probability(self, lam):
        w = stick_breaking_weights(lam)
        assert np.all(w >= 0)
        assert w.sum() <= 1.0 + 1e-12

    def test_first_weight_increases_with_first_proportion(self):
        grid = np.linspace(0.05, 1.0, 25)
        firsts = [stick_breaking_weights([lam, 0.5, 1.0])[0] for lam in grid]
        assert np.all(np.diff(firsts) > 0)


def _posterior(g, h, u, v):
    g = np.asarray(g, float)
    m = g.size
    u = np.asarray(u, float)
    return VariationalPosterior(
        r=np.zeros((1, m)),
        g_star=g,
        h_star=np.asarray(h, float),
        s_star=np.full(m, 2.0),
        t_star=np.ones(m),
        u_star=u,
        v_star=np.asarray(v, float),
    )


class TestPosteriorPointEstimates:
    def test_single_component_limit(self):
        post = _posterior([1.0], [1e-12], [[2.0, 2.0]], [[1.0, 1.0]])
        pi, alpha = posterior_point_estimates(post)
        assert pi[0] == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(alpha, [[2.0, 2.0]])

    def test_gamma_posterior_mean(self):
        post = _posterior([1.0], [1.0], [[33.9, 33.9]], [[2.0, 2.0]])
        _, alpha = posterior_point_estimates(post)
        assert alpha[0, 0] == pytest.approx(16.95)

    def test_scale_consistency(self):
        u = np.array([[4.0, 6.0], [10.0, 3.0]])
        v = np.array([[2.0, 3.0], [5.0, 1.0]])
        base = posterior_point_estimates(_posterior([2.0, 1.0], [3.0, 1.0], u, v))[1]
        scaled = posterior_point_estimates(
            _posterior([2.0, 1.0], [3.0, 1.0], 7.5 * u, 7.5 * v)
        )[1]
        assert np.allclose(base, scaled)


class TestBuildEstimate:
    def test_prunes_renormalizes_and_orders(self):
        pi = np.array([0.39, 1e-7, 0.6, 1e-6])
        alphas = np.array([[2.0, 2.0], [9.0, 9.0], [3.0, 3.0], [8.0, 8.0]])
        est = build_estimate(pi, alphas, 1e-5)
        assert est.n_components == 2
        assert est.weights.sum() == pytest.approx(1.0, abs=1e-15)
        # descending weight order
        assert est.weights[0] > est.weights[1]
        assert np.allclose(est.components[0].alpha, [3.0, 3.0])

    def test_tie_broken_by_first_concentration(self):
        pi = np.array([0.5, 0.5])
        alphas = np.array([[7.0, 1.0], [2.0, 1.0]])
        est = build_estimate(pi, alphas, 1e-5)
        assert est.components[0].alpha[0] == 2.0


class TestMixtureEstimate:
    def test_invariants(self):
        comps = (InvertedDirichletParams([2.0, 2.0]), InvertedDirichletParams([3.0, 3.0]))
        est = MixtureEstimate(weights=np.array([0.6, 0.4]), components=comps)
        assert est.n_components == 2
        assert est.alphas.shape == (2, 2)

    def test_rejects_bad_weights(self):
        comps = (InvertedDirichletParams([2.0, 2.0]),)
        with pytest.raises(ValueError):
            MixtureEstimate(weights=np.array([0.9]), components=comps)

    def test_rejects_mixed_dimensions(self):
        comps = (
            InvertedDirichletParams([2.0, 2.0]),
            InvertedDirichletParams([3.0, 3.0, 3.0]),
        )
        with pytest.raises(ValueError):
            MixtureEstimate(weights=np.array([0.5, 0.5]), components=comps)


class TestElboTrace:
    def test_valid(self):
        t = ElboTrace(iterations=np.array([1, 2, 3]), values=np.array([-5.0, -4.0, -3.9]))
        assert len(t) == 3

    @pytest.mark.parametrize(
        "iters", [np.array([0, 1]), np.array([1, 1]), np.array([2, 1])]
    )
    def test_rejects_bad_indices(self, iters):
        with pytest.raises(ValueError):
            ElboTrace(iterations=iters, values=np.zeros(len(iters)))
