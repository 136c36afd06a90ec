import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from diffrecon.diffusion import (
    ddim_sample,
    ddim_sigma,
    ddim_step,
    ddpm_sigma,
    ddpm_step,
    forward_diffuse,
    make_schedule,
    reverse_diffusion,
    tweedie_x0,
)
from diffrecon.errors import ConfigurationError, DivergenceError
from diffrecon.score import GaussianOracle, OraclePredictor


class TestSchedule:
    def test_default(self):
        sched = make_schedule()
        assert sched.T == 1000
        assert sched.beta_at(1) == pytest.approx(1e-4)
        assert sched.beta_at(1000) == pytest.approx(0.02)
        assert sched.alpha_bar_at(sched.T) < 0.01

    def test_single_step(self):
        sched = make_schedule(T=1, beta_start=0.3, beta_end=0.3)
        assert sched.alpha_bar_at(1) == pytest.approx(0.7)

    def test_products_consistent(self, short_schedule):
        assert_allclose(short_schedule.alpha_bar, np.cumprod(1.0 - short_schedule.beta))
        assert_allclose(short_schedule.alpha_bar + short_schedule.beta_bar, 1.0)
        assert np.all(np.diff(short_schedule.alpha_bar) < 0)

    def test_time_zero_convention(self, short_schedule):
        assert short_schedule.alpha_bar_at(0) == 1.0
        assert short_schedule.beta_bar_at(0) == 0.0
        with pytest.raises(ConfigurationError):
            short_schedule.beta_at(0)

    def test_table_matches_accessor(self, short_schedule):
        ts = np.array([0, 1, 17, 50])
        expected = [short_schedule.alpha_bar_at(int(t)) for t in ts]
        assert_allclose(short_schedule.alpha_bar_table(ts), expected)

    @pytest.mark.parametrize(
        "T,start,end", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.1, 0.05), (10, 1e-4, 1.0)]
    )
    def test_rejects_bad_ranges(self, T, start, end):
        with pytest.raises(ConfigurationError):
            make_schedule(T, start, end)

    def test_out_of_range_step(self, short_schedule):
        with pytest.raises(ConfigurationError):
            short_schedule.alpha_bar_at(short_schedule.T + 1)


class TestForwardAndTweedie:
    def test_time_zero_is_identity(self, short_schedule, rng):
        x0 = rng.standard_normal((8, 8))
        out = forward_diffuse(x0, 0, rng.standard_normal((8, 8)), short_schedule)
        assert_allclose(out, x0)

    def test_zero_noise(self, short_schedule, rng):
        x0 = rng.standard_normal((8, 8))
        out = forward_diffuse(x0, 20, np.zeros((8, 8)), short_schedule)
        assert_allclose(out, math.sqrt(short_schedule.alpha_bar_at(20)) * x0)

    def test_marginal_variance(self, short_schedule, rng):
        t = 25
        samples = forward_diffuse(np.zeros(10_000), t, rng.standard_normal(10_000), short_schedule)
        assert samples.var() == pytest.approx(short_schedule.beta_bar_at(t), rel=0.05)

    def test_tweedie_inverts_exact_noise(self, short_schedule, rng):
        x0 = rng.standard_normal((8, 8))
        noise = rng.standard_normal((8, 8))
        x_t = forward_diffuse(x0, 30, noise, short_schedule)
        assert_allclose(tweedie_x0(x_t, 30, noise, short_schedule), x0, atol=1e-9)

    def test_tweedie_zero_prediction(self, short_schedule, rng):
        x_t = rng.standard_normal((8, 8))
        out = tweedie_x0(x_t, 10, np.zeros((8, 8)), short_schedule)
        assert_allclose(out, x_t / math.sqrt(short_schedule.alpha_bar_at(10)))

    def test_tweedie_standard_normal_prior(self, short_schedule, rng):
        oracle = OraclePredictor(GaussianOracle(np.zeros((8, 8)), 1.0), short_schedule)
        x_t = rng.standard_normal((8, 8))
        t = 12
        x0_hat = tweedie_x0(x_t, t, oracle.predict(x_t, t, None), short_schedule)
        assert_allclose(x0_hat, math.sqrt(short_schedule.alpha_bar_at(t)) * x_t, atol=1e-12)

    def test_tweedie_needs_positive_time(self, short_schedule):
        with pytest.raises(ConfigurationError):
            tweedie_x0(np.zeros(4), 0, np.zeros(4), short_schedule)


class TestReverseSteps:
    """DDIM and DDPM single steps."""

    def test_ddim_deterministic_ignores_noise(self, short_schedule, rng):
        x_t, eps, x0_hat = (rng.standard_normal((8, 8)) for _ in range(3))
        a = ddim_step(x_t, 20, eps, x0_hat, 0.0, rng.standard_normal((8, 8)), short_schedule)
        b = ddim_step(x_t, 20, eps, x0_hat, 0.0, rng.standard_normal((8, 8)), short_schedule)
        assert np.array_equal(a, b)

    def test_ddim_last_step_returns_estimate(self, short_schedule, rng):
        x_t, eps, x0_hat = (rng.standard_normal((8, 8)) for _ in range(3))
        out = ddim_step(x_t, 1, eps, x0_hat, 0.0, np.zeros((8, 8)), short_schedule)
        assert_allclose(out, x0_hat, atol=1e-12)

    def test_ddim_full_eta_sigma_is_ddpm_sigma(self, short_schedule):
        for t in (2, 10, 33, 50):
            assert ddim_sigma(t, 1.0, short_schedule) == pytest.approx(ddpm_sigma(t, short_schedule))

    def test_ddim_full_eta_matches_ddpm_moments(self, short_schedule):
        rng = np.random.default_rng(5)
        t = 30
        x_t = np.full(10_000, 0.7)
        eps = np.full(10_000, -0.3)
        x0_hat = tweedie_x0(x_t, t, eps, short_schedule)
        ddim = ddim_step(x_t, t, eps, x0_hat, 1.0, rng.standard_normal(10_000), short_schedule)
        ddpm = ddpm_step(x_t, t, eps, rng.standard_normal(10_000), short_schedule)
        sigma = ddpm_sigma(t, short_schedule)
        assert ddim.mean() == pytest.approx(ddpm.mean(), abs=4 * sigma / 100)
        assert ddim.var() == pytest.approx(ddpm.var(), rel=0.05)

    def test_ddpm_zero_inputs(self, short_schedule, rng):
        x_t = rng.standard_normal((8, 8))
        zeros = np.zeros((8, 8))
        out = ddpm_step(x_t, 15, zeros, zeros, short_schedule)
        assert_allclose(out, x_t / math.sqrt(1.0 - short_schedule.beta_at(15)))

    def test_ddpm_variance(self, short_schedule):
        rng = np.random.default_rng(6)
        x_t = np.zeros(10_000)
        out = ddpm_step(x_t, 40, np.zeros(10_000), rng.standard_normal(10_000), short_schedule)
        assert out.var() == pytest.approx(ddpm_sigma(40, short_schedule) ** 2, rel=0.05)

    @pytest.mark.parametrize("t,eta", [(0, 0.0), (51, 0.0), (10, -0.1), (10, 1.5)])
    def test_ddim_rejects_bad_arguments(self, short_schedule, t, eta):
        z = np.zeros(4)
        with pytest.raises(ConfigurationError):
            ddim_step(z, t, z, z, eta, z, short_schedule)


class TestReverseDiffusion:
    def test_deterministic_given_seed(self, short_schedule):
        oracle = OraclePredictor(GaussianOracle(np.full((8, 8), 2.0), 0.25), short_schedule)
        g = np.zeros((8, 8))
        a = ddim_sample(oracle, g, short_schedule, np.random.default_rng(3))
        b = ddim_sample(oracle, g, short_schedule, np.random.default_rng(3))
        assert np.array_equal(a, b)

    def test_oracle_samples_follow_gaussian(self):
        sched = make_schedule(T=200, beta_start=1e-4, beta_end=0.05)
        mean, var = 1.5, 0.25
        oracle = OraclePredictor(GaussianOracle(np.full((64, 64), mean), var), sched)
        x0 = ddim_sample(oracle, np.zeros((64, 64)), sched, np.random.default_rng(0), eta=1.0)
        assert x0.mean() == pytest.approx(mean, abs=0.05)
        assert x0.var() == pytest.approx(var, rel=0.15)

    @pytest.mark.slow
    def test_deterministic_chains_transport_noise_to_prior(self):
        sched = make_schedule(T=1000, beta_start=1e-4, beta_end=0.02)
        mean, var = 1.5, 0.25
        oracle = OraclePredictor(GaussianOracle(np.full((8, 8), mean), var), sched)
        chains = reverse_diffusion(
            oracle, np.zeros((8, 8)), sched, np.random.default_rng(6),
            eta=0.0, shape=(2000, 8, 8),
        )
        pixel_mean = chains.mean(axis=0)
        pixel_var = chains.var(axis=0)
        assert_allclose(pixel_mean, mean, rtol=0.05)
        assert pixel_var.mean() == pytest.approx(var, rel=0.05)
        assert_allclose(pixel_var, var, rtol=0.15)

    def test_partial_start_without_noise_is_identity(self, short_schedule):
        class Zero:
            def predict(self, x_t, t, g):
                return np.zeros_like(x_t)

        x0 = np.linspace(0.0, 1.0, 64).reshape(8, 8)
        x_start = forward_diffuse(x0, 10, np.zeros((8, 8)), short_schedule)
        out = reverse_diffusion(
            Zero(), np.zeros((8, 8)), short_schedule, np.random.default_rng(0),
            t_start=10, x_start=x_start,
        )
        assert_allclose(out, x0, atol=1e-12)

    def test_hook_sees_every_step(self, short_schedule):
        oracle = OraclePredictor(GaussianOracle(np.zeros((8, 8)), 1.0), short_schedule)
        seen = []

        def hook(t, x_t, x0_hat, x_next):
            seen.append(t)
            return x_next

        reverse_diffusion(
            oracle, np.zeros((8, 8)), short_schedule, np.random.default_rng(1),
            t_start=7, after_step=hook,
        )
        assert seen == [7, 6, 5, 4, 3, 2, 1]

    def test_non_finite_state_raises(self, short_schedule):
        oracle = OraclePredictor(GaussianOracle(np.zeros((8, 8)), 1.0), short_schedule)
        with pytest.raises(DivergenceError):
            reverse_diffusion(
                oracle, np.zeros((8, 8)), short_schedule, np.random.default_rng(1),
                after_step=lambda t, x, x0, nxt: nxt * np.nan,
            )

    def test_rejects_bad_start(self, short_schedule):
        oracle = OraclePredictor(GaussianOracle(np.zeros((8, 8)), 1.0), short_schedule)
        with pytest.raises(ConfigurationError):
            reverse_diffusion(
                oracle, np.zeros((8, 8)), short_schedule, np.random.default_rng(1), t_start=0
            )
