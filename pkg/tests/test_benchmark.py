"""Benchmark harness: protocol, aggregation, elbow, metrics, exports."""

import logging
import math

import numpy as np
import pytest

from peloton.benchmark import (
    BenchmarkCurve,
    CurvePoint,
    SweepConfig,
    compare_forecasters,
    export_curves,
    import_curves,
    mae,
    point_metrics,
    r_squared,
    recommend_alpha,
    run_sweep,
    run_sweep_detailed,
    _fold_indices,
)
from peloton.data import generate_synthetic
from peloton.errors import (
    InsufficientDataError,
    InvalidArgumentError,
    UndefinedMetricError,
)
from peloton.plotting import render_benchmark_figures
from peloton.regressors import RegressorSpec

KNN_BASE = RegressorSpec(kind="knn", k=10)
FAST_QRF = RegressorSpec(kind="quantile_forest", tree_count=10, seed=1)


def _fast_config(**over):
    defaults = dict(
        alphas=(0.05, 0.1, 0.2),
        repeats=2,
        folds=3,
        methods=("cv_plus", "cv_minmax", "icp", "cqr"),
        seed=3,
        base_spec=KNN_BASE,
        quantile_spec=FAST_QRF,
        bootstrap_count=15,
        calibration_fraction=0.3,
    )
    defaults.update(over)
    return SweepConfig(**defaults)


class TestRunSweep:
    @pytest.fixture(scope="class")
    def sweep(self):
        data = generate_synthetic(150, "speed", seed=17)
        config = _fast_config()
        return config, run_sweep(config, data)

    def test_one_curve_per_method(self, sweep):
        config, curves = sweep
        assert [c.method for c in curves] == list(config.methods)

    def test_points_cover_alpha_grid(self, sweep):
        config, curves = sweep
        for curve in curves:
            assert curve.alphas == list(config.alphas)

    def test_error_rates_are_rates(self, sweep):
        _, curves = sweep
        for curve in curves:
            for p in curve.points:
                assert 0.0 <= p.error_rate <= 1.0
                assert p.mean_width >= 0.0
                assert p.width_stddev >= 0.0

    def test_mean_width_non_increasing_in_alpha(self, sweep):
        _, curves = sweep
        for curve in curves:
            widths = [p.mean_width for p in curve.points]
            assert all(a >= b - 1e-12 for a, b in zip(widths, widths[1:]))

    def test_deterministic_given_seed(self):
        data = generate_synthetic(90, "speed", seed=23)
        config = _fast_config(repeats=1, methods=("icp", "cqr"))
        assert run_sweep(config, data) == run_sweep(config, data)

    def test_parallel_matches_serial(self):
        data = generate_synthetic(90, "speed", seed=29)
        serial = run_sweep(_fast_config(repeats=1, n_jobs=1), data)
        parallel = run_sweep(_fast_config(repeats=1, n_jobs=2), data)
        assert serial == parallel

    def test_incompatible_method_skipped_not_fatal(self, caplog):
        data = generate_synthetic(24, "speed", seed=31)
        # round(16 * 0.3) < 10 calibration points: icp and cqr cannot run
        config = _fast_config(methods=("cv_plus", "icp", "cqr"), repeats=1)
        with caplog.at_level(logging.WARNING, logger="peloton.benchmark"):
            curves = run_sweep(config, data)
        assert [c.method for c in curves] == ["cv_plus"]
        assert any("icp" in r.message for r in caplog.records)

    def test_conservatism_ordering(self):
        data = generate_synthetic(240, "speed", seed=37)
        config = _fast_config(
            methods=("cv_plus", "cv_minmax", "jackknife_plus", "jackknife_minmax"),
            repeats=2, folds=3,
        )
        curves = {c.method: c for c in run_sweep(config, data)}
        for plus, minmax in (("cv_plus", "cv_minmax"), ("jackknife_plus", "jackknife_minmax")):
            avg_plus = np.mean([p.error_rate for p in curves[plus].points])
            avg_minmax = np.mean([p.error_rate for p in curves[minmax].points])
            assert avg_minmax <= avg_plus + 1e-12

    def test_averaging_order_equal_folds_pooled_equivalence(self):
        data = generate_synthetic(120, "speed", seed=41)
        config = _fast_config(methods=("cv_plus",), repeats=2, folds=4)
        curves, cells = run_sweep_detailed(config, data)
        sizes = []
        for r in range(config.repeats):
            folds = _fold_indices(120, config, r)
            sizes.extend(len(folds[f]) for f in range(config.folds))
        assert len(set(sizes)) == 1  # equal folds by construction
        per_cell = np.array([stats["cv_plus"]["error"] for stats, _ in cells])
        pooled = np.average(per_cell, axis=0, weights=sizes)
        reported = np.array([p.error_rate for p in curves[0].points])
        np.testing.assert_allclose(reported, pooled, rtol=0, atol=1e-12)

    def test_small_data_rejected(self):
        data = generate_synthetic(3, "speed", seed=43)
        with pytest.raises(InsufficientDataError):
            run_sweep(_fast_config(folds=5), data)


class TestSweepConfig:
    def test_alpha_bounds(self):
        with pytest.raises(InvalidArgumentError):
            SweepConfig(alphas=(0.1, 0.6))
        with pytest.raises(InvalidArgumentError):
            SweepConfig(alphas=())
        with pytest.raises(InvalidArgumentError):
            SweepConfig(alphas=(0.2, 0.1))

    def test_unknown_method(self):
        with pytest.raises(InvalidArgumentError):
            SweepConfig(methods=("icp", "magic"))

    def test_round_trip(self):
        config = _fast_config()
        assert SweepConfig.from_dict(config.to_dict()) == config


class TestRecommendAlpha:
    def _curve(self, widths, alphas=None):
        alphas = alphas or [0.01 * (i + 1) for i in range(len(widths))]
        return BenchmarkCurve(
            method="icp",
            points=tuple(
                CurvePoint(alpha=a, error_rate=0.0, mean_width=w, width_stddev=0.0)
                for a, w in zip(alphas, widths)
            ),
        )

    def test_linear_curve_ties_to_first_interior_point(self):
        curve = self._curve([10.0 - i for i in range(8)])
        assert recommend_alpha(curve) == pytest.approx(0.02)

    def test_planted_corner_found(self):
        # steep drop until alpha=0.05, flat afterwards
        alphas = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.10, 0.15, 0.20]
        widths = [20.0, 16.0, 12.0, 8.0, 4.0, 3.9, 3.7, 3.5, 3.4]
        assert recommend_alpha(self._curve(widths, alphas)) == pytest.approx(0.05)

    def test_needs_four_points(self):
        with pytest.raises(InsufficientDataError):
            recommend_alpha(self._curve([3.0, 2.0, 1.0]))

    def test_degenerate_chord(self):
        curve = self._curve([5.0, 5.0, 5.0, 5.0], alphas=[0.05, 0.05, 0.05, 0.05])
        assert recommend_alpha(curve) == pytest.approx(0.05)


class TestPointMetrics:
    def test_perfect_fit(self):
        pm = point_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert pm.mae == 0.0
        assert pm.r_squared == 1.0
        assert pm.n_eval == 3

    def test_degenerate_variance(self):
        assert mae([1.0, 3.0], [2.0, 2.0]) == 1.0
        with pytest.raises(UndefinedMetricError):
            r_squared([1.0, 3.0], [2.0, 2.0])
        with pytest.raises(UndefinedMetricError):
            point_metrics([1.0, 3.0], [2.0, 2.0])

    def test_hand_arithmetic(self):
        # residuals {1, 1, 0}: MAE 2/3, SS_res 2, SS_tot 14
        pm = point_metrics([2.0, 4.0, 6.0], [1.0, 5.0, 6.0])
        assert pm.mae == pytest.approx(2.0 / 3.0)
        assert pm.r_squared == pytest.approx(1.0 - 2.0 / 14.0)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            point_metrics([1.0], [1.0, 2.0])


class TestCompareForecasters:
    def _with_maes(self, model_mae, coach_mae):
        actuals = [0.0, 10.0]
        model = [actuals[0] + model_mae, actuals[1] - model_mae]
        coach = [actuals[0] + coach_mae, actuals[1] - coach_mae]
        return model, coach, actuals

    def test_speed_comparison_reduction(self):
        model, coach, actuals = self._with_maes(1.73, 2.46)
        report = compare_forecasters(model, coach, actuals)
        assert report.model.mae == pytest.approx(1.73)
        assert report.baseline.mae == pytest.approx(2.46)
        assert report.mae_reduction == pytest.approx(0.30, abs=0.01)

    def test_power_comparison_reduction(self):
        model, coach, actuals = self._with_maes(12.68, 23.10)
        report = compare_forecasters(model, coach, actuals)
        assert report.mae_reduction == pytest.approx(0.45, abs=0.005)

    def test_identical_forecasters(self):
        model, coach, actuals = self._with_maes(1.5, 1.5)
        assert compare_forecasters(model, coach, actuals).mae_reduction == 0.0


class TestExportImport:
    @pytest.fixture(scope="class")
    def run(self, tmp_path_factory):
        data = generate_synthetic(100, "speed", seed=53)
        config = _fast_config(
            methods=("icp", "cv_plus"), alphas=(0.05, 0.1, 0.15, 0.2), repeats=1
        )
        curves = run_sweep(config, data)
        out = tmp_path_factory.mktemp("export")
        paths = export_curves(curves, out, target_kind="speed", config=config)
        return config, curves, paths

    def test_cardinality(self, run):
        _, _, paths = run
        rows = open(paths["csv"]).read().strip().splitlines()
        assert len(rows) == 1 + 2 * 4  # header + methods x alphas

    def test_reexport_byte_identical(self, run, tmp_path):
        config, curves, paths = run
        again = export_curves(curves, tmp_path, target_kind="speed", config=config)
        assert open(paths["csv"], "rb").read() == open(again["csv"], "rb").read()
        assert open(paths["manifest"], "rb").read() == open(again["manifest"], "rb").read()

    def test_round_trip_import(self, run):
        _, curves, paths = run
        assert import_curves(paths["csv"]) == curves

    def test_rerun_same_seed_byte_identical(self, run, tmp_path):
        config, _, paths = run
        data = generate_synthetic(100, "speed", seed=53)
        curves = run_sweep(config, data)
        again = export_curves(curves, tmp_path, target_kind="speed", config=config)
        assert open(paths["csv"], "rb").read() == open(again["csv"], "rb").read()

    def test_measured_time_round_trips(self, tmp_path):
        data = generate_synthetic(80, "speed", seed=59)
        config = _fast_config(methods=("icp",), repeats=1, measure_time=True)
        curves = run_sweep(config, data)
        assert all(p.wall_time_s is not None for p in curves[0].points)
        paths = export_curves(curves, tmp_path, target_kind="speed", config=config)
        assert import_curves(paths["csv"]) == curves

    def test_figures_rendered(self, run, tmp_path):
        _, curves, _ = run
        paths = render_benchmark_figures(curves, "speed", tmp_path)
        for p in paths:
            assert p.endswith(".svg")
            head = open(p, "r", encoding="utf-8").read(200)
            assert "svg" in head
