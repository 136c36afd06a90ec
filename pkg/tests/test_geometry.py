import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from diffrecon.errors import ConfigurationError, DomainError
from diffrecon.geometry import (
    GridSpec,
    Image,
    ProjSpec,
    Sinogram,
    back_project,
    forward_project,
    get_projector,
    log_likelihood_from_mean,
    poisson_log_likelihood,
    sensitivity,
    simulate_counts,
    uniform_background,
)


def delta(grid: GridSpec, row: int, col: int) -> Image:
    values = np.zeros(grid.shape)
    values[row, col] = 1.0
    return Image(grid, values)


class TestForwardProject:
    """Ray-driven line integrals."""

    def test_centre_voxel_chord_lengths(self):
        grid = GridSpec(nx=9, ny=9, voxel_size=2.0)
        proj = ProjSpec(n_angles=6, n_bins=9, bin_width=2.0)
        sino = forward_project(delta(grid, 4, 4), proj).values

        theta = proj.angles()
        chord = 2.0 / np.maximum(np.abs(np.cos(theta)), np.abs(np.sin(theta)))
        assert_allclose(sino[:, 4], chord, atol=1e-10)
        assert_allclose(np.delete(sino, 4, axis=1), 0.0, atol=1e-10)

    def test_zero_image(self, small_grid, small_proj):
        sino = forward_project(Image.zeros(small_grid), small_proj)
        assert np.all(sino.values == 0.0)

    def test_linearity(self, blob_image, small_proj):
        once = forward_project(blob_image, small_proj).values
        twice = forward_project(blob_image.scaled(2.0), small_proj).values
        assert_allclose(twice, 2.0 * once, rtol=1e-12)

    def test_grid_mismatch(self, small_projector):
        with pytest.raises(ConfigurationError):
            small_projector.forward(Image.zeros(GridSpec(nx=8, ny=8)))


class TestBackProject:
    """Back projection is the exact adjoint."""

    @pytest.mark.parametrize(
        "grid, proj",
        [
            (GridSpec(nx=32, ny=32, voxel_size=2.0), ProjSpec(n_angles=24, n_bins=47, bin_width=2.0)),
            (GridSpec(nx=64, ny=64, voxel_size=2.0), ProjSpec(n_angles=60, n_bins=95, bin_width=2.0)),
        ],
        ids=["32x32", "64x64"],
    )
    def test_adjoint_identity(self, rng, grid, proj):
        projector = get_projector(grid, proj)
        for _ in range(20):
            x = rng.standard_normal(grid.shape)
            s = rng.standard_normal(proj.shape)
            ax = projector.forward_array(x)
            lhs = float(np.sum(ax * s))
            rhs = float(np.sum(x * projector.back_array(s)))
            assert abs(lhs - rhs) / (np.linalg.norm(ax) * np.linalg.norm(s)) <= 1e-6

    def test_zero_sinogram(self, small_grid, small_proj):
        img = back_project(Sinogram.zeros(small_proj), small_grid)
        assert np.all(img.values == 0.0)

    def test_normal_operator_commutes_with_half_turn(self, small_grid, small_proj):
        row, col = 3, 5
        mirrored = (small_grid.ny - 1 - row, small_grid.nx - 1 - col)
        normal = lambda img: back_project(forward_project(img, small_proj), small_grid)  # noqa: E731
        a = normal(delta(small_grid, row, col)).values
        b = normal(delta(small_grid, *mirrored)).values
        assert_allclose(np.rot90(a, 2), b, atol=1e-9)

    def test_layout_mismatch(self, small_projector):
        with pytest.raises(ConfigurationError):
            small_projector.back(Sinogram.zeros(ProjSpec(n_angles=3, n_bins=5)))


class TestSensitivity:
    def test_equals_backprojected_ones(self, small_grid, small_proj):
        s = sensitivity(small_proj, small_grid).values
        ones = back_project(Sinogram.full(small_proj, 1.0), small_grid).values
        assert np.array_equal(s, ones)

    def test_centre_at_least_corner(self, small_grid, small_proj):
        s = sensitivity(small_proj, small_grid).values
        assert s[8, 8] >= s[0, 0]

    def test_scales_with_geometry(self, small_grid, small_proj):
        c = 1.5
        grid = GridSpec(nx=small_grid.nx, ny=small_grid.ny, voxel_size=small_grid.voxel_size * c)
        proj = ProjSpec(
            n_angles=small_proj.n_angles,
            n_bins=small_proj.n_bins,
            bin_width=small_proj.bin_width * c,
        )
        base = sensitivity(small_proj, small_grid).values
        assert_allclose(sensitivity(proj, grid).values, c * base, rtol=1e-9)


class TestPoissonLogLikelihood:
    def test_single_bin(self):
        value = log_likelihood_from_mean(np.array([3.0]), np.array([2.0]))
        assert value == pytest.approx(3.0 * math.log(2.0) - 2.0)
        assert value == pytest.approx(0.0794, abs=1e-4)

    def test_all_zero(self, small_grid, small_proj):
        y = Sinogram.zeros(small_proj)
        assert poisson_log_likelihood(y, Image.zeros(small_grid), y) == 0.0

    def test_counts_without_mean(self):
        with pytest.raises(DomainError):
            log_likelihood_from_mean(np.array([1.0, 0.0]), np.array([0.0, 1.0]))

    def test_stationary_at_true_scale(self, blob_image, small_proj):
        b = Sinogram.zeros(small_proj)
        y = forward_project(blob_image, small_proj)
        h = 1e-5
        up = poisson_log_likelihood(y, blob_image.scaled(1 + h), b)
        down = poisson_log_likelihood(y, blob_image.scaled(1 - h), b)
        assert abs((up - down) / (2 * h)) <= 1e-6 * y.total

    def test_concave_along_random_directions(self, blob_image, small_proj, rng):
        ybar = forward_project(blob_image, small_proj)
        y, scale = simulate_counts(ybar, 1e4, rng_seed=5)
        b = Sinogram.full(small_proj, 0.5)
        x = blob_image.scaled(scale)
        for _ in range(10):
            d = rng.uniform(-0.5, 0.5, x.values.shape) * x.values
            centre = poisson_log_likelihood(y, x, b)
            up = poisson_log_likelihood(y, x.like(x.values + d), b)
            down = poisson_log_likelihood(y, x.like(x.values - d), b)
            assert up + down - 2 * centre <= 0.0

class TestSimulateCounts:
    def test_mean(self):
        proj = ProjSpec(n_angles=10, n_bins=100)
        ybar = Sinogram.full(proj, 5.0)
        counts, scale = simulate_counts(ybar, ybar.total, rng_seed=3)
        assert scale == pytest.approx(1.0)
        assert counts.values.mean() == pytest.approx(5.0, abs=0.25)

    def test_variance_matches_mean(self):
        proj = ProjSpec(n_angles=40, n_bins=100)
        ybar = Sinogram.full(proj, 100.0)
        counts, _ = simulate_counts(ybar, ybar.total, rng_seed=4)
        assert counts.values.var() == pytest.approx(100.0, rel=0.1)

    def test_scale_hits_count_target(self, blob_image, small_proj):
        ybar = forward_project(blob_image, small_proj)
        _, scale = simulate_counts(ybar, 1e5, rng_seed=0)
        assert ybar.total * scale == pytest.approx(1e5, rel=1e-6)

    def test_seed_determinism(self, blob_image, small_proj):
        ybar = forward_project(blob_image, small_proj)
        a, _ = simulate_counts(ybar, 1e4, rng_seed=11)
        b, _ = simulate_counts(ybar, 1e4, rng_seed=11)
        c, _ = simulate_counts(ybar, 1e4, rng_seed=12)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_background_is_not_scaled(self):
        proj = ProjSpec(n_angles=20, n_bins=100)
        ybar = Sinogram.full(proj, 1.0)
        background = Sinogram.full(proj, 50.0)
        counts, _ = simulate_counts(ybar, ybar.total, rng_seed=5, background=background)
        assert counts.values.mean() == pytest.approx(51.0, rel=0.02)

    @pytest.mark.parametrize("target", [0.0, -1.0])
    def test_rejects_bad_target(self, small_proj, target):
        with pytest.raises(ConfigurationError):
            simulate_counts(Sinogram.full(small_proj, 1.0), target, rng_seed=0)

    def test_rejects_zero_mean(self, small_proj):
        with pytest.raises(ConfigurationError):
            simulate_counts(Sinogram.zeros(small_proj), 1e3, rng_seed=0)


def test_uniform_background_total(small_proj):
    b = uniform_background(small_proj, 0.25, 1e4)
    assert b.total == pytest.approx(2.5e3)
    assert np.ptp(b.values) == 0.0


def test_image_shape_checked(small_grid):
    with pytest.raises(ConfigurationError):
        Image(small_grid, np.zeros((3, 3)))
