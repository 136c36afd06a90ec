import numpy as np
import pytest
from numpy.testing import assert_allclose

from diffrecon.classical import mapem, mapem_iterates, mlem, mlem_iterates, mlem_update
from diffrecon.classical.rdp import rdp_gradient, rdp_penalty
from diffrecon.errors import ConfigurationError
from diffrecon.geometry import Image, Sinogram, forward_project, poisson_log_likelihood
from diffrecon.geometry.likelihood import simulate_counts


@pytest.fixture
def noisy_problem(blob_image, small_proj):
    ybar = forward_project(blob_image, small_proj)
    y, scale = simulate_counts(ybar, 2e4, rng_seed=21)
    return y, Sinogram.zeros(small_proj), blob_image.scaled(scale)


def roughness(x: Image) -> float:
    v = x.values
    return float(np.mean(np.diff(v, axis=0) ** 2) + np.mean(np.diff(v, axis=1) ** 2))


class TestMlem:
    """Multiplicative EM updates."""

    def test_noiseless_fixed_point(self, blob_image, small_projector, small_proj):
        y = forward_project(blob_image, small_proj)
        b = Sinogram.zeros(small_proj)
        out = mlem_update(blob_image, y, b, small_projector.sensitivity())
        assert_allclose(out.values, blob_image.values, rtol=1e-9)

    def test_zero_data_gives_zero_image(self, small_grid, small_proj, small_projector):
        y = Sinogram.zeros(small_proj)
        out = mlem_update(Image.full(small_grid, 1.0), y, y, small_projector.sensitivity())
        assert np.all(out.values == 0.0)

    def test_likelihood_non_decreasing(self, noisy_problem, small_grid):
        y, b, _ = noisy_problem
        previous = -np.inf
        for state in mlem_iterates(y, b, 50, grid=small_grid):
            value = poisson_log_likelihood(y, state.x, b)
            assert value >= previous - 1e-9 * abs(value)
            previous = value

    def test_single_iteration_is_one_update(self, noisy_problem, small_grid, small_projector):
        y, b, _ = noisy_problem
        start = Image.full(small_grid, 3.0)
        expected = mlem_update(start, y, b, small_projector.sensitivity())
        assert_allclose(mlem(y, b, 1, start).values, expected.values, rtol=1e-14)

    def test_more_iterations_fit_better(self, noisy_problem, small_grid):
        y, b, _ = noisy_problem
        early = poisson_log_likelihood(y, mlem(y, b, 10, grid=small_grid), b)
        late = poisson_log_likelihood(y, mlem(y, b, 100, grid=small_grid), b)
        assert late > early

    def test_stays_non_negative(self, noisy_problem, small_grid):
        y, b, _ = noisy_problem
        assert mlem(y, b, 20, grid=small_grid).values.min() >= 0.0

    def test_preserves_counts(self, noisy_problem, small_grid, small_projector):
        y, b, _ = noisy_problem
        x = mlem(y, b, 100, grid=small_grid)
        assert float(np.sum(small_projector.sensitivity_array() * x.values)) == pytest.approx(
            y.total, rel=0.01
        )

    def test_needs_start(self, noisy_problem):
        y, b, _ = noisy_problem
        with pytest.raises(ConfigurationError):
            mlem(y, b, 5)

    def test_rejects_zero_iterations(self, noisy_problem, small_grid):
        y, b, _ = noisy_problem
        with pytest.raises(ConfigurationError):
            mlem(y, b, 0, grid=small_grid)


class TestRdpPenalty:
    """Relative-difference penalty on the 8-neighbourhood."""

    def test_uniform_is_zero(self, small_grid):
        assert rdp_penalty(Image.full(small_grid, 4.0)) == 0.0

    def test_single_bump(self, tiny_grid):
        values = np.ones(tiny_grid.shape)
        values[3, 3] = 2.0
        # each ordered (2, 1) pair costs 1 / (3 + 2) = 0.2; 8 neighbours, both directions
        assert rdp_penalty(Image(tiny_grid, values), gamma=2.0) == pytest.approx(16 * 0.2)

    def test_positively_homogeneous(self, blob_image):
        assert rdp_penalty(blob_image.scaled(3.0)) == pytest.approx(3.0 * rdp_penalty(blob_image))

    def test_two_voxel_pair(self, tiny_grid):
        values = np.ones(tiny_grid.shape)
        values[0, 0] = 2.0
        # one (2, 1) pair counted both directions costs 2 / (3 + 2) = 0.4; a corner has 3 neighbours
        assert rdp_penalty(Image(tiny_grid, values), gamma=2.0) == pytest.approx(3 * 0.4)

    def test_transpose_symmetry(self, tiny_grid, rng):
        x = rng.uniform(0.5, 2.0, tiny_grid.shape)
        assert rdp_penalty(Image(tiny_grid, x.T.copy())) == pytest.approx(
            rdp_penalty(Image(tiny_grid, x)), rel=1e-12
        )
        assert_allclose(rdp_gradient(x.T.copy(), 2.0), rdp_gradient(x, 2.0).T, rtol=1e-12)

    def test_gradient_matches_finite_differences(self, tiny_grid, rng):
        x = rng.uniform(0.5, 2.0, tiny_grid.shape)
        grad = rdp_gradient(x, 2.0)
        h = 1e-6
        for j in [(0, 0), (3, 4), (7, 7), (5, 1)]:
            up, down = x.copy(), x.copy()
            up[j] += h
            down[j] -= h
            numeric = (
                rdp_penalty(Image(tiny_grid, up)) - rdp_penalty(Image(tiny_grid, down))
            ) / (2 * h)
            assert grad[j] == pytest.approx(numeric, rel=1e-5, abs=1e-8)

    def test_rejects_negative_gamma(self, blob_image):
        with pytest.raises(ConfigurationError):
            rdp_penalty(blob_image, gamma=-1.0)


class TestMapem:
    """One-step-late MAPEM."""

    def test_zero_weight_is_mlem(self, noisy_problem, small_grid):
        y, b, _ = noisy_problem
        a = mapem(y, b, 30, weight=0.0, grid=small_grid)
        m = mlem(y, b, 30, grid=small_grid)
        assert_allclose(a.values, m.values, rtol=1e-12, atol=1e-12)

    def test_weight_smooths(self, noisy_problem, small_grid):
        y, b, _ = noisy_problem
        values = [roughness(mapem(y, b, 60, weight=w, grid=small_grid)) for w in (0.1, 1.0, 10.0)]
        assert values[0] > values[1] > values[2]

    def test_reports_clamped_denominators(self, noisy_problem, small_grid):
        y, b, _ = noisy_problem
        start = np.ones(small_grid.shape)
        start[8, 8] = 100.0
        first = next(mapem_iterates(y, b, 1, 2.0, 1000.0, Image(small_grid, start)))
        assert first.clamped > 0
        assert np.all(np.isfinite(first.x.values))

    def test_rejects_negative_weight(self, noisy_problem, small_grid):
        y, b, _ = noisy_problem
        with pytest.raises(ConfigurationError):
            mapem(y, b, 5, weight=-1.0, grid=small_grid)
