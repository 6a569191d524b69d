import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad
from scipy.stats import kstest

from invdirmix import (
    InvertedDirichletParams,
    digamma,
    invdir_log_pdf,
    log_gamma,
    sample_gamma,
    sample_invdir,
    seed_stream,
)

from oracles import mp_digamma, mp_log_gamma

EULER_GAMMA = 0.5772156649015329


class TestLogGamma:
    def test_known_values(self):
        assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
        assert log_gamma(0.5) == pytest.approx(np.log(np.sqrt(np.pi)), rel=1e-13)
        assert log_gamma(10.0) == pytest.approx(np.log(362880.0), rel=1e-13)

    def test_matches_high_precision_oracle(self):
        for a in np.logspace(-6, 6, 101):
            ref = mp_log_gamma(a)
            assert abs(log_gamma(a) - ref) <= 1e-12 * max(1.0, abs(ref))

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            log_gamma(bad)

    @given(st.floats(min_value=1e-3, max_value=100.0))
    @settings(max_examples=200, deadline=None)
    def test_recurrence(self, a):
        assert abs(log_gamma(a + 1.0) - log_gamma(a) - np.log(a)) < 1e-10


class TestDigamma:
    def test_known_values(self):
        assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-12)
        assert digamma(2.0) == pytest.approx(1.0 - EULER_GAMMA, abs=1e-12)
        # oracle: psi(1/2) = -euler_gamma - 2 ln 2
        assert mp_digamma(0.5) == pytest.approx(-EULER_GAMMA - 2 * np.log(2), abs=1e-15)
        assert digamma(0.5) == pytest.approx(mp_digamma(0.5), abs=1e-12)

    def test_matches_high_precision_oracle(self):
        # 1e-10 absolute, plus float64 representation granularity where
        # |psi| reaches 1e6 and one ulp already exceeds 1e-10
        eps = np.finfo(float).eps
        for a in np.logspace(-6, 6, 101):
            ref = mp_digamma(a)
            assert abs(digamma(a) - ref) <= 1e-10 + eps * abs(ref)

    @pytest.mark.parametrize("bad", [0.0, -0.5, np.inf, np.nan])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            digamma(bad)

    @given(st.floats(min_value=1e-3, max_value=100.0))
    @settings(max_examples=200, deadline=None)
    def test_recurrence(self, a):
        assert abs(digamma(a + 1.0) - digamma(a) - 1.0 / a) < 1e-10

    @given(st.floats(min_value=0.1, max_value=100.0))
    @settings(max_examples=100, deadline=None)
    def test_derivative_of_log_gamma(self, a):
        h = 1e-5
        central = (log_gamma(a + h) - log_gamma(a - h)) / (2 * h)
        assert abs(central - digamma(a)) < 1e-5


class TestInvertedDirichletParams:
    def test_valid(self):
        p = InvertedDirichletParams([2.0, 3.0, 4.0])
        assert p.dim == 2

    @pytest.mark.parametrize("bad", [[2.0], [1.0, 0.0], [1.0, -2.0], [1.0, np.nan]])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            InvertedDirichletParams(bad)


class TestInvdirLogPdf:
    def test_hand_computed_values(self):
        # Gamma(4)/(Gamma(2)Gamma(2)) * x * (1+x)^-4 at x=1 is 6/16
        assert invdir_log_pdf([1.0], InvertedDirichletParams([2.0, 2.0])) == pytest.approx(
            np.log(0.375), rel=1e-12
        )
        assert invdir_log_pdf([1.0], InvertedDirichletParams([1.0, 1.0])) == pytest.approx(
            -2 * np.log(2.0), rel=1e-12
        )

    def test_normalizes_d1(self):
        p = InvertedDirichletParams([2.5, 3.5])
        total, err = quad(lambda x: np.exp(invdir_log_pdf([x], p)), 0, np.inf)
        assert total == pytest.approx(1.0, abs=max(1e-8, 10 * err))

    def test_normalizes_d2(self):
        p = InvertedDirichletParams([2.0, 3.0, 4.0])
        total, err = dblquad(
            lambda y, x: np.exp(invdir_log_pdf([x, y], p)),
            0, 60.0, 0, 60.0,
        )
        # the integrand tail beyond the box is tiny for these concentrations
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_errors(self):
        p = InvertedDirichletParams([2.0, 2.0])
        with pytest.raises(ValueError):
            invdir_log_pdf([1.0, 1.0], p)
        with pytest.raises(ValueError):
            invdir_log_pdf([-1.0], p)
        with pytest.raises(ValueError):
            invdir_log_pdf([0.0], p)

    @given(st.integers(min_value=0, max_value=1_000_000))
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 6))
        alpha = rng.uniform(0.5, 20.0, size=d + 1)
        x = rng.uniform(0.05, 5.0, size=d)
        perm = rng.permutation(d)
        base = invdir_log_pdf(x, InvertedDirichletParams(alpha))
        permuted = invdir_log_pdf(
            x[perm], InvertedDirichletParams(np.concatenate([alpha[perm], alpha[-1:]]))
        )
        assert permuted == pytest.approx(base, rel=1e-12, abs=1e-12)


class TestSampleGamma:
    def test_moments(self):
        rng = seed_stream(123)
        draws = sample_gamma(2.0, 4.0, rng, size=1_000_000)
        assert draws.mean() == pytest.approx(0.5, abs=0.005)
        assert draws.var() == pytest.approx(0.125, abs=0.005)

    def test_seed_determinism(self):
        a = sample_gamma(1.0, 1.0, seed_stream(7), size=100)
        b = sample_gamma(1.0, 1.0, seed_stream(7), size=100)
        assert np.array_equal(a, b)

    def test_shape_below_one(self):
        draws = sample_gamma(0.5, 2.0, seed_stream(11), size=200_000)
        assert np.all(draws > 0)
        assert draws.mean() == pytest.approx(0.25, rel=0.02)

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_gamma(0.0, 1.0, seed_stream(0))
        with pytest.raises(ValueError):
            sample_gamma(1.0, -1.0, seed_stream(0))


class TestSampleInvdir:
    def test_marginal_means(self):
        # mean of x_d is alpha_d / (alpha_{D+1} - 1) when the last entry > 1
        p = InvertedDirichletParams([16.0, 8.0, 6.0, 12.0])
        draws = sample_invdir(p, seed_stream(42), size=1_000_000)
        expected = np.array([16.0, 8.0, 6.0]) / 11.0
        assert np.all(np.abs(draws.mean(axis=0) / expected - 1.0) < 0.02)

    def test_all_positive(self):
        p = InvertedDirichletParams([0.8, 1.2, 0.6])
        draws = sample_invdir(p, seed_stream(1), size=10_000)
        assert np.all(draws > 0)

    def test_single_draw_shape(self):
        p = InvertedDirichletParams([2.0, 2.0, 2.0])
        x = sample_invdir(p, seed_stream(3))
        assert x.shape == (2,)

    def test_ks_against_quadrature_cdf(self):
        # CDF of iDir(x | 2, 2) from quadrature of 6x/(1+x)^4; cross-checked
        # against the closed form 1 - 3/(1+x)^2 + 2/(1+x)^3 before use.
        p = InvertedDirichletParams([2.0, 2.0])

        def cdf_closed(x):
            return 1.0 - 3.0 / (1.0 + x) ** 2 + 2.0 / (1.0 + x) ** 3

        for x in [0.1, 0.5, 1.0, 3.0, 10.0]:
            numeric, _ = quad(lambda t: np.exp(invdir_log_pdf([t], p)), 0, x)
            assert numeric == pytest.approx(cdf_closed(x), abs=1e-9)

        draws = sample_invdir(p, seed_stream(2024), size=1_000_000)[:, 0]
        stat = kstest(draws, cdf_closed).statistic
        assert stat < 0.005

    def test_histogram_matches_density(self):
        # sampler and log pdf agree: histogram vs exp(log pdf) within 3
        # standard errors per bin
        p = InvertedDirichletParams([3.0, 4.0])
        draws = sample_invdir(p, seed_stream(77), size=1_000_000)[:, 0]
        edges = np.linspace(0.05, 3.0, 40)
        counts, _ = np.histogram(draws, bins=edges)
        n = draws.size
        for i in range(len(edges) - 1):
            mass, _ = quad(lambda t: np.exp(invdir_log_pdf([t], p)), edges[i], edges[i + 1])
            se = np.sqrt(mass * (1 - mass) * n)
            assert abs(counts[i] - mass * n) < 3 * se + 1e-9
