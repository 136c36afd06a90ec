import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from diffrecon.errors import ConfigurationError
from diffrecon.geometry import GridSpec
from diffrecon.phantom import (
    AMYLOID_NEGATIVE_CONTRAST,
    FDG_CONTRAST,
    AugmentParams,
    ContrastSpec,
    TissueMasks,
    apply_augmentation,
    augment,
    draw_augmentation,
    make_labels,
    make_phantom,
    make_training_set,
    phantom_from_labels,
)
from diffrecon.phantom.augment import (
    ROTATION_RANGE_DEG,
    SHEAR_RANGE,
    SPATIAL_SCALE_RANGE,
    UPTAKE_RANGE,
)
from diffrecon.seeding import stream_seed


def tissue_mean(sample, name):
    return sample.activity.values[sample.masks.roi(name)].mean()


class TestMakePhantom:
    """Procedural phantoms and their masks."""

    def test_fdg_contrast_ratio(self, fdg_phantom):
        ratio = tissue_mean(fdg_phantom, "gm") / tissue_mean(fdg_phantom, "wm")
        assert ratio == pytest.approx(4.0, rel=1e-12)

    def test_amyloid_contrast_inverted(self, amyloid_phantom):
        assert tissue_mean(amyloid_phantom, "wm") > tissue_mean(amyloid_phantom, "gm")

    def test_deterministic(self, phantom_grid):
        a = make_phantom(11, FDG_CONTRAST, phantom_grid)
        b = make_phantom(11, FDG_CONTRAST, phantom_grid)
        assert np.array_equal(a.activity.values, b.activity.values)
        assert np.array_equal(a.mr_prior.values, b.mr_prior.values)

    def test_seeds_differ(self, phantom_grid):
        a = make_labels(1, phantom_grid)
        b = make_labels(2, phantom_grid)
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_masks_partition_grid(self, phantom_grid, seed):
        sample = make_phantom(seed, FDG_CONTRAST, phantom_grid)
        assert sample.masks.is_partition()
        assert sample.masks.putamen.any()
        assert not np.any(sample.masks.putamen & ~sample.masks.gm)

    def test_mr_prior_independent_of_contrast(self, fdg_phantom, amyloid_phantom):
        assert np.array_equal(fdg_phantom.mr_prior.values, amyloid_phantom.mr_prior.values)

    def test_mr_prior_orders_tissues(self, fdg_phantom):
        mr = fdg_phantom.mr_prior.values
        masks = fdg_phantom.masks
        assert mr[masks.wm].mean() > mr[masks.gm].mean() > mr[masks.csf].mean()
        assert mr.min() >= 0.0 and mr.max() <= 1.0

    def test_from_labels_matches_generator(self, phantom_grid):
        labels = make_labels(5, phantom_grid)
        built = phantom_from_labels(labels, FDG_CONTRAST, phantom_grid, mr_seed=5)
        direct = make_phantom(5, FDG_CONTRAST, phantom_grid)
        assert np.array_equal(built.activity.values, direct.activity.values)


class TestTissueMasks:
    def test_labels_round_trip(self, fdg_phantom):
        labels = fdg_phantom.masks.labels()
        again = TissueMasks.from_labels(labels)
        for name in ("gm", "wm", "csf", "background", "putamen"):
            assert np.array_equal(again.roi(name), fdg_phantom.masks.roi(name))

    def test_unknown_label(self):
        with pytest.raises(ConfigurationError):
            TissueMasks.from_labels(np.full((8, 8), 9, dtype=np.uint8))


class TestContrastSpec:
    def test_rejects_equal_levels(self):
        with pytest.raises(ValidationError):
            ContrastSpec(gm_level=1.0, wm_level=1.0)

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            ContrastSpec(gm_level=-1.0)

    def test_contrast_regimes(self):
        assert FDG_CONTRAST.gm_level / FDG_CONTRAST.wm_level == pytest.approx(4.0)
        assert AMYLOID_NEGATIVE_CONTRAST.wm_level == pytest.approx(3.3)


class TestAugment:
    """Uptake scaling and affine warps."""

    def test_identity_draw(self, fdg_phantom):
        out = apply_augmentation(fdg_phantom, AugmentParams())
        assert_allclose(out.activity.values, fdg_phantom.activity.values, atol=1e-6)
        assert_allclose(out.mr_prior.values, fdg_phantom.mr_prior.values, atol=1e-6)
        assert np.array_equal(out.masks.labels(), fdg_phantom.masks.labels())

    def test_grey_matter_uptake_only(self, fdg_phantom):
        out = apply_augmentation(fdg_phantom, AugmentParams(gm_scale=1.2))
        assert tissue_mean(out, "gm") == pytest.approx(1.2 * tissue_mean(fdg_phantom, "gm"))
        assert tissue_mean(out, "wm") == pytest.approx(tissue_mean(fdg_phantom, "wm"))

    def test_draws_within_ranges(self):
        rng = np.random.default_rng(0)
        draws = [draw_augmentation(rng) for _ in range(10_000)]
        checks = {
            "gm_scale": UPTAKE_RANGE,
            "wm_scale": UPTAKE_RANGE,
            "spatial_scale": SPATIAL_SCALE_RANGE,
            "rotation_deg": ROTATION_RANGE_DEG,
            "shear": SHEAR_RANGE,
        }
        for name, (lo, hi) in checks.items():
            values = np.array([getattr(d, name) for d in draws])
            assert values.min() >= lo and values.max() <= hi, name

    def test_output_is_non_negative_partition(self, fdg_phantom):
        out = augment(fdg_phantom, rng_seed=3)
        assert out.activity.values.min() >= 0.0
        assert out.masks.is_partition()

    def test_seeded(self, fdg_phantom):
        a = augment(fdg_phantom, rng_seed=9)
        b = augment(fdg_phantom, rng_seed=9)
        assert np.array_equal(a.activity.values, b.activity.values)

    def test_grey_matter_area_follows_spatial_scale(self):
        base = make_phantom(7, FDG_CONTRAST, GridSpec(nx=64, ny=64))
        before = int(base.masks.gm.sum())
        for seed in range(20):
            params = draw_augmentation(np.random.default_rng(seed))
            after = int(augment(base, rng_seed=seed).masks.gm.sum())
            expected = before * params.spatial_scale**2
            assert 0.8 * expected <= after <= 1.2 * expected, seed


class TestMakeTrainingSet:
    def test_size(self, phantom_grid):
        samples = make_training_set(2, 3, FDG_CONTRAST, seed=0, grid=phantom_grid)
        assert len(samples) == 6

    def test_single_unaugmented(self, phantom_grid):
        (sample,) = make_training_set(1, 1, FDG_CONTRAST, seed=4, grid=phantom_grid)
        direct = make_phantom(stream_seed(4, 0), FDG_CONTRAST, phantom_grid)
        assert np.array_equal(sample.activity.values, direct.activity.values)

    @pytest.mark.parametrize("n_base,expansion", [(0, 1), (1, 0)])
    def test_rejects_empty(self, n_base, expansion):
        with pytest.raises(ConfigurationError):
            make_training_set(n_base, expansion, FDG_CONTRAST, seed=0)
