import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from diffrecon.errors import ConfigurationError, DomainError
from diffrecon.geometry import GridSpec, Image
from diffrecon.metrics import (
    CurvePoint,
    RoiSet,
    acceptance_checks,
    contrast_cv_curve,
    contrast_recovery,
    cv,
    dominates,
    ensemble_stats,
    evaluate_run,
    marker_protocol,
    percent_contrast,
    psnr,
    psnr_grid_rows,
    rank_rows,
    tradeoff_curves,
)
from diffrecon.metrics.report import (
    RunMetrics,
    check_lora,
    check_ood,
    check_tprime_beta,
    check_tradeoff,
)


@pytest.fixture
def grid():
    return GridSpec(nx=8, ny=8)


@pytest.fixture
def rois(grid):
    gm = np.zeros(grid.shape, dtype=bool)
    gm[0:2] = True
    wm = np.zeros(grid.shape, dtype=bool)
    wm[2:6] = True
    putamen = np.zeros(grid.shape, dtype=bool)
    putamen[0, 0:3] = True
    return RoiSet({"gm": gm, "wm": wm, "putamen": putamen, "background": ~(gm | wm)})


@pytest.fixture
def truth(grid, rois):
    values = np.zeros(grid.shape)
    values[rois.masks["gm"]] = 4.0
    values[rois.masks["wm"]] = 1.0
    return Image(grid, values)


def run_metrics(method, recipe, psnr_value, sweep_value=None, **method_settings):
    return RunMetrics(
        run_id=f"{method}-{sweep_value}",
        method=method,
        recipe=recipe,
        sweep_key=None,
        sweep_value=sweep_value,
        settings={"method_settings": method_settings},
        rows=[{"psnr": psnr_value}],
    )


class TestPsnr:
    def test_twenty_decibels(self, grid):
        truth = Image.full(grid, 1.0)
        assert psnr(truth, truth.values + 0.1) == pytest.approx(20.0)

    def test_identical_images(self, truth):
        assert psnr(truth, truth) == math.inf

    def test_peak_from_truth(self, truth):
        est = truth.values.copy()
        est[7, 7] = 100.0
        mse = 100.0**2 / truth.values.size
        assert psnr(truth, est) == pytest.approx(10 * math.log10(16.0 / mse))

    def test_invariant_under_shared_permutation(self, truth, rng):
        est = truth.values + rng.normal(0.0, 0.3, truth.values.shape)
        order = rng.permutation(truth.values.size)
        shuffled_truth = truth.values.ravel()[order].reshape(truth.grid.shape)
        shuffled_est = est.ravel()[order].reshape(truth.grid.shape)
        assert psnr(shuffled_truth, shuffled_est) == pytest.approx(psnr(truth, est), rel=1e-12)

    def test_zero_truth(self, grid):
        with pytest.raises(DomainError):
            psnr(Image.zeros(grid), Image.full(grid, 1.0))

    def test_shape_mismatch(self, truth):
        with pytest.raises(ConfigurationError):
            psnr(truth, np.zeros((4, 4)))


class TestRoiMetrics:
    """%contrast, white-matter CV and contrast recovery."""

    def test_cv(self, truth, rois):
        est = truth.values.copy()
        wm_idx = np.flatnonzero(rois.masks["wm"])
        est.flat[wm_idx[::2]] = 0.5
        est.flat[wm_idx[1::2]] = 1.5
        assert cv(est, rois) == pytest.approx(0.5)

    def test_cv_needs_positive_mean(self, grid, rois):
        with pytest.raises(DomainError):
            cv(Image.zeros(grid), rois)

    def test_full_and_flat_contrast(self, truth, rois, grid):
        assert percent_contrast(truth, truth, rois) == pytest.approx(100.0)
        assert percent_contrast(Image.full(grid, 2.0), truth, rois) == pytest.approx(0.0)

    def test_half_contrast(self, truth, rois):
        est = truth.values.copy()
        est[rois.masks["gm"]] = 2.5
        assert percent_contrast(est, truth, rois) == pytest.approx(50.0)

    @pytest.mark.parametrize("factor", [0.5, 3.0])
    def test_ratio_metrics_ignore_global_scale(self, truth, rois, rng, factor):
        est = truth.values * rng.uniform(0.7, 1.3, truth.values.shape) + 0.1
        assert percent_contrast(est * factor, truth, rois) == pytest.approx(
            percent_contrast(est, truth, rois), rel=1e-12
        )
        assert cv(est * factor, rois) == pytest.approx(cv(est, rois), rel=1e-12)

    def test_undefined_reference_contrast(self, grid, rois):
        flat = Image.full(grid, 1.0)
        with pytest.raises(DomainError):
            percent_contrast(flat, flat, rois)

    def test_contrast_recovery(self, truth, rois):
        putamen = rois.masks["putamen"]
        assert contrast_recovery(truth, truth, putamen) == pytest.approx(1.0)
        assert contrast_recovery(truth.scaled(0.8), truth, putamen) == pytest.approx(0.8)

    def test_empty_roi(self, truth):
        with pytest.raises(DomainError):
            contrast_recovery(truth, truth, np.zeros(truth.grid.shape, dtype=bool))

    def test_missing_roi(self, truth):
        with pytest.raises(DomainError):
            cv(truth, RoiSet({}))


class TestEnsemble:
    def test_symmetric_realizations(self, truth):
        d = 0.3
        stats = ensemble_stats([truth.like(truth.values + d), truth.like(truth.values - d)], truth)
        assert_allclose(stats.mean.values, truth.values)
        assert_allclose(stats.bias.values, 0.0, atol=1e-12)
        assert_allclose(stats.std.values, d)
        assert stats.n == 2

    def test_needs_two(self, truth):
        with pytest.raises(ConfigurationError):
            ensemble_stats([truth], truth)

    def test_grid_mismatch(self, truth):
        other = Image.zeros(GridSpec(nx=8, ny=8, voxel_size=1.0))
        with pytest.raises(ConfigurationError):
            ensemble_stats([other, other], truth)


class TestTradeoffCurves:
    def test_marker_protocols(self):
        assert marker_protocol("mlem") == [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0]
        assert marker_protocol("dps") == pytest.approx([0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0])
        assert marker_protocol("ddip", T=500) == [
            10.0, 20.0, 30.0, 40.0, 50.0, 100.0, 200.0, 300.0, 400.0, 500.0
        ]

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            marker_protocol("fbp")

    def test_curve_sorted_by_sweep_value(self, truth, rois):
        curve = contrast_cv_curve([(20.0, [truth]), (10.0, [truth, truth])], truth, rois)
        assert [p.sweep_value for p in curve] == [10.0, 20.0]
        assert curve[0].percent_contrast == pytest.approx(100.0)
        assert curve[0].cv == pytest.approx(0.0)

    def test_empty_sweep_point(self, truth, rois):
        with pytest.raises(ConfigurationError):
            contrast_cv_curve([(10.0, [])], truth, rois)

    def test_dominates(self):
        curve = [CurvePoint(10, 50.0, 0.2), CurvePoint(20, 100.0, 0.4)]
        assert dominates(CurvePoint(0, 75.0, 0.2), curve)
        assert not dominates(CurvePoint(0, 75.0, 0.35), curve)


class TestReport:
    def test_evaluate_run_rows(self, truth, rois):
        settings = {"recipe": "comparison", "sweep_value": None}
        run = evaluate_run("mlem", "mlem", settings, [truth.values, truth.values * 0.9], truth, rois)
        assert len(run.rows) == 2
        assert run.rows[0]["contrast"] == pytest.approx(100.0)
        assert run.rows[1]["cr"] == pytest.approx(0.9)
        assert run.rows[0]["recipe"] == "comparison"
        assert run.rows[0]["sweep_value"] == ""

    def test_tradeoff_curves_group_by_method(self, truth, rois):
        runs = [
            evaluate_run(
                f"mlem_it{it:03d}", "mlem", {"recipe": "tradeoff", "sweep_value": it},
                [truth.values], truth, rois,
            )
            for it in (20, 10)
        ]
        curves = tradeoff_curves(runs, truth, rois)
        assert list(curves) == ["mlem"]
        assert [p.sweep_value for p in curves["mlem"]] == [10.0, 20.0]

    def test_ood_check(self):
        runs = [
            run_metrics("ddip", "comparison", 25.0),
            run_metrics("mlem", "comparison", 22.0),
            run_metrics("dps", "comparison", 20.0),
        ]
        assert check_ood(runs).passed is True
        runs[1] = run_metrics("mlem", "comparison", 24.5)
        assert check_ood(runs).passed is False
        assert check_ood(runs[:1]).passed is None

    def test_interior_tprime(self):
        runs = [
            run_metrics("ddip", "tprime-beta", value, t_start=tp, beta=beta)
            for tp, value in ((10, 20.0), (50, 24.0), (100, 23.0), (500, 18.0))
            for beta in (1e-3, 1e-2)
        ]
        grid = psnr_grid_rows(runs)
        assert [(r["t_start"], r["beta"]) for r in grid][:2] == [(10, 1e-3), (10, 1e-2)]
        shape, stable = check_tprime_beta(grid)
        assert shape.passed is True
        assert stable.passed is True

    def test_tprime_judged_on_checkpoints_when_present(self):
        # T = 500: checkpoints are 25, 125 and 500
        def grid_of(psnrs):
            runs = [
                run_metrics("ddip", "tprime-beta", value, t_start=tp, beta=0.01)
                for tp, value in psnrs.items()
            ]
            return psnr_grid_rows(runs)

        psnrs = {10: 20.0, 25: 22.0, 50: 26.0, 100: 23.0, 125: 21.0, 500: 18.0}
        grid = grid_of(psnrs)
        assert check_tprime_beta(grid)[0].passed is True
        shape, _ = check_tprime_beta(grid, T=500)
        assert shape.passed is False
        assert shape.detail.endswith("25, 125, 500")

        psnrs[125] = 24.0
        shape, _ = check_tprime_beta(grid_of(psnrs), T=500)
        assert shape.passed is True

    def test_tprime_falls_back_without_checkpoints(self):
        runs = [
            run_metrics("ddip", "tprime-beta", v, t_start=tp, beta=0.01)
            for tp, v in ((10, 20.0), (50, 24.0), (500, 18.0))
        ]
        shape, _ = check_tprime_beta(psnr_grid_rows(runs), T=500)
        assert shape.passed is True
        assert shape.detail.endswith("10, 50, 500")

    def test_edge_tprime_fails(self):
        runs = [
            run_metrics("ddip", "tprime-beta", value, t_start=tp, beta=0.01)
            for tp, value in ((10, 26.0), (50, 24.0), (100, 23.0))
        ]
        shape, stable = check_tprime_beta(psnr_grid_rows(runs))
        assert shape.passed is False
        assert stable.passed is None

    def test_lora_check(self):
        runs = [
            run_metrics("ddip", "lora-rank", 21.0, sweep_value=0),
            run_metrics("ddip", "lora-rank", 23.0, sweep_value=4),
        ]
        assert rank_rows(runs) == [{"rank": 0, "psnr": 21.0}, {"rank": 4, "psnr": 23.0}]
        assert check_lora(rank_rows(runs)).passed is True
        assert check_lora([]).passed is None

    def test_tradeoff_check(self):
        curves = {
            "mlem": [CurvePoint(10, 50.0, 0.2), CurvePoint(100, 100.0, 0.4)],
            "ddip": [CurvePoint(100, 75.0, 0.1)],
        }
        assert check_tradeoff(curves, 100).passed is True
        assert check_tradeoff(curves, 50).passed is None
        assert check_tradeoff({}, 100).passed is None

    def test_all_checks_skip_without_data(self):
        checks = acceptance_checks([], {}, 100)
        assert len(checks) == 5
        assert all(c.passed is None for c in checks)
