"""Benchmark harness: repeated K-fold evaluation of interval validity and
efficiency across significance levels.

The protocol mirrors how the methods are used operationally: for each of
``repeats`` shuffles, split the data into ``folds`` folds; calibrate every
method on the training portion of each fold and score the held-out fold
at every alpha. Reported numbers are averages of per-(repeat, fold) cell
statistics, which for equal fold sizes coincide with pooled statistics.

Calibration is alpha-free for everything except CQR, so each cell
calibrates once per method family and sweeps alpha at prediction time;
the two members of each resampling family (plus/minmax) share one set of
fitted models.

Wall-clock calibration cost is only measured when ``measure_time=True``:
timings are inherently run-dependent, and the default keeps exported CSVs
byte-identical across reruns of the same seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .conformal import METHODS, MethodConfig, calibrate_suite
from .data import Dataset, hash_tag
from .errors import (
    InsufficientDataError,
    InvalidArgumentError,
    UndefinedMetricError,
)
from .regressors import RegressorSpec

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = tuple(round(0.01 * i, 2) for i in range(1, 21))

CSV_COLUMNS = ("method", "alpha", "error_rate", "mean_width", "width_stddev", "wall_time_s")


@dataclass(frozen=True)
class SweepConfig:
    """Protocol settings for one benchmark run."""

    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    repeats: int = 5
    folds: int = 5
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    base_spec: RegressorSpec = RegressorSpec()
    quantile_spec: RegressorSpec | None = None
    difficulty_spec: RegressorSpec | None = None
    inner_folds: int = 5
    bootstrap_count: int = 30
    calibration_fraction: float = 0.25
    beta: float | None = None
    cqr_band_policy: str = "fixed"
    n_jobs: int = 1
    measure_time: bool = False

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "methods", tuple(self.methods))
        if not alphas:
            raise InvalidArgumentError("alphas must be non-empty")
        for a in alphas:
            if not 0.0 < a < 0.5:
                raise InvalidArgumentError(f"alphas must be in (0, 0.5), got {a}")
        if list(alphas) != sorted(alphas):
            raise InvalidArgumentError("alphas must be sorted ascending")
        if self.repeats < 1:
            raise InvalidArgumentError("repeats must be >= 1")
        if self.folds < 2:
            raise InvalidArgumentError("folds must be >= 2")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InvalidArgumentError(f"unknown methods: {sorted(unknown)}")
        if not self.methods:
            raise InvalidArgumentError("methods must be non-empty")

    def method_config(self, method: str, seed: int) -> MethodConfig:
        return MethodConfig(
            method=method,
            base_spec=self.base_spec,
            quantile_spec=self.quantile_spec,
            difficulty_spec=self.difficulty_spec,
            folds=self.inner_folds,
            bootstrap_count=self.bootstrap_count,
            calibration_fraction=self.calibration_fraction,
            beta=self.beta,
            cqr_band_policy=self.cqr_band_policy,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "repeats": self.repeats,
            "folds": self.folds,
            "methods": list(self.methods),
            "seed": self.seed,
            "base_spec": self.base_spec.to_dict(),
            "quantile_spec": None if self.quantile_spec is None else self.quantile_spec.to_dict(),
            "difficulty_spec": (
                None if self.difficulty_spec is None else self.difficulty_spec.to_dict()
            ),
            "inner_folds": self.inner_folds,
            "bootstrap_count": self.bootstrap_count,
            "calibration_fraction": self.calibration_fraction,
            "beta": self.beta,
            "cqr_band_policy": self.cqr_band_policy,
            "n_jobs": self.n_jobs,
            "measure_time": self.measure_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        d["alphas"] = tuple(d["alphas"])
        d["methods"] = tuple(d["methods"])
        d["base_spec"] = RegressorSpec.from_dict(d["base_spec"])
        if d.get("quantile_spec") is not None:
            d["quantile_spec"] = RegressorSpec.from_dict(d["quantile_spec"])
        if d.get("difficulty_spec") is not None:
            d["difficulty_spec"] = RegressorSpec.from_dict(d["difficulty_spec"])
        return cls(**d)


@dataclass(frozen=True)
class CurvePoint:
    alpha: float
    error_rate: float
    mean_width: float
    width_stddev: float
    wall_time_s: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.error_rate <= 1.0:
            raise InvalidArgumentError(f"error_rate must be in [0, 1], got {self.error_rate}")
        if self.mean_width < 0:
            raise InvalidArgumentError("mean_width must be >= 0")


@dataclass(frozen=True)
class BenchmarkCurve:
    """Per-method sweep results, points sorted by alpha."""

    method: str
    points: tuple[CurvePoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        alphas = [p.alpha for p in self.points]
        if alphas != sorted(alphas):
            raise InvalidArgumentError("curve points must be sorted by alpha")

    @property
    def alphas(self) -> list[float]:
        return [p.alpha for p in self.points]

    def point_at(self, alpha: float) -> CurvePoint:
        for p in self.points:
            if math.isclose(p.alpha, alpha, rel_tol=0, abs_tol=1e-12):
                return p
        raise InvalidArgumentError(f"no point at alpha={alpha}")


@dataclass(frozen=True)
class PointMetrics:
    mae: float
    r_squared: float
    n_eval: int


@dataclass(frozen=True)
class ComparisonReport:
    model: PointMetrics
    baseline: PointMetrics
    mae_reduction: float


# ---------------------------------------------------------------------------
# the sweep


def _cell_seed(seed: int, repeat: int, fold: int) -> int:
    ss = np.random.SeedSequence((hash_tag("sweep-cell"), seed, repeat, fold))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _fold_indices(n: int, config: SweepConfig, repeat: int) -> list[np.ndarray]:
    rng = np.random.default_rng(
        np.random.SeedSequence((hash_tag("sweep-folds"), config.seed, repeat))
    )
    return np.array_split(rng.permutation(n), config.folds)


def _run_cell(config: SweepConfig, X, y, repeat: int, fold: int):
    """Evaluate every method on one (repeat, fold) cell.

    Returns ``(stats, failures)`` where ``stats[method]`` holds per-alpha
    arrays of error rate, mean width, width std plus the calibration cost.
    """
    folds = _fold_indices(X.shape[0], config, repeat)
    test_idx = folds[fold]
    train_mask = np.ones(X.shape[0], dtype=bool)
    train_mask[test_idx] = False
    X_train, y_train = X[train_mask], y[train_mask]
    X_test, y_test = X[test_idx], y[test_idx]

    seed = _cell_seed(config.seed, repeat, fold)
    configs = [config.method_config(m, seed) for m in config.methods]

    by_family: dict[str, list[MethodConfig]] = {}
    for mc in configs:
        by_family.setdefault(mc.family, []).append(mc)

    stats: dict[str, dict] = {}
    failures: dict[str, str] = {}
    alphas = list(config.alphas)
    for family_configs in by_family.values():
        try:
            models, secs = calibrate_suite(family_configs, (X_train, y_train))
        except Exception as exc:  # surface per method, keep the rest running
            for mc in family_configs:
                failures[mc.method] = str(exc)
            continue
        for mc in family_configs:
            model = models[mc.method]
            bounds = model.predict_intervals(X_test, alphas)
            covered = (y_test[:, None] >= bounds[:, :, 0]) & (y_test[:, None] <= bounds[:, :, 1])
            widths = bounds[:, :, 1] - bounds[:, :, 0]
            stats[mc.method] = {
                "error": 1.0 - covered.mean(axis=0),
                "mean_width": widths.mean(axis=0),
                "width_std": widths.std(axis=0),
                "seconds": secs[mc.method] if config.measure_time else None,
            }
    return stats, failures


def run_sweep(config: SweepConfig, data: Dataset | tuple) -> list[BenchmarkCurve]:
    """Run the repeated K-fold sweep and aggregate per-method curves.

    Methods that cannot run on this data (for example a calibration split
    too small for ICP) are skipped with a logged warning; the others
    complete. Deterministic given ``config.seed`` (and independent of
    ``n_jobs``), except for the optional wall-time measurements.
    """
    curves, _ = run_sweep_detailed(config, data)
    return curves


def run_sweep_detailed(config: SweepConfig, data: Dataset | tuple):
    """Like :func:`run_sweep` but also returns the per-cell statistics."""
    if isinstance(data, Dataset):
        X = data.matrix()
        y = np.asarray(data.targets, dtype=np.float64)
    else:
        X, y = data
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
    if X.shape[0] < config.folds:
        raise InsufficientDataError(
            f"{config.folds}-fold protocol needs at least {config.folds} rows"
        )

    cells = [(r, f) for r in range(config.repeats) for f in range(config.folds)]
    n_jobs = config.n_jobs
    if n_jobs == 1:
        results = [_run_cell(config, X, y, r, f) for r, f in cells]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_cell)(config, X, y, r, f) for r, f in cells
        )

    failed: dict[str, str] = {}
    for _, cell_failures in results:
        failed.update(cell_failures)
    for method, reason in failed.items():
        logger.warning("method %s skipped: %s", method, reason)

    curves = []
    for method in config.methods:
        if method in failed:
            continue
        per_cell = [stats[method] for stats, _ in results]
        error = np.mean([c["error"] for c in per_cell], axis=0)
        mean_width = np.mean([c["mean_width"] for c in per_cell], axis=0)
        width_std = np.mean([c["width_std"] for c in per_cell], axis=0)
        if config.measure_time:
            total_seconds = float(np.sum([c["seconds"] for c in per_cell]))
        else:
            total_seconds = None
        points = tuple(
            CurvePoint(
                alpha=a,
                error_rate=float(error[j]),
                mean_width=float(mean_width[j]),
                width_stddev=float(width_std[j]),
                wall_time_s=total_seconds,
            )
            for j, a in enumerate(config.alphas)
        )
        curves.append(BenchmarkCurve(method=method, points=points))
    return curves, results


# ---------------------------------------------------------------------------
# alpha recommendation (elbow)


def recommend_alpha(curve: BenchmarkCurve) -> float:
    """Elbow of the width-versus-alpha curve.

    Picks the interior grid alpha whose (alpha, mean_width) point lies
    farthest (perpendicular distance) from the chord joining the curve's
    endpoints; ties break toward smaller alpha. Needs at least 4 points.
    """
    pts = curve.points
    if len(pts) < 4:
        raise InsufficientDataError("elbow recommendation needs at least 4 curve points")
    a = np.array([p.alpha for p in pts])
    w = np.array([p.mean_width for p in pts])
    ax, ay = a[0], w[0]
    bx, by = a[-1], w[-1]
    chord = math.hypot(bx - ax, by - ay)
    if chord == 0.0:
        return float(a[1])
    dist = np.abs((bx - ax) * (ay - w) - (ax - a) * (by - ay)) / chord
    interior = dist[1:-1]
    # near-ties (e.g. an exactly linear curve up to float noise) resolve to
    # the smallest alpha
    tol = 1e-9 * max(1.0, chord)
    best = int(np.argmax(interior >= interior.max() - tol)) + 1
    return float(a[best])


# ---------------------------------------------------------------------------
# point-forecast metrics


def mae(predictions, actuals) -> float:
    p, t = _paired(predictions, actuals)
    return float(np.mean(np.abs(p - t)))


def r_squared(predictions, actuals) -> float:
    p, t = _paired(predictions, actuals)
    if t.size < 2:
        raise UndefinedMetricError("R^2 needs at least 2 observations")
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise UndefinedMetricError("R^2 undefined: actuals have zero variance")
    ss_res = float(((p - t) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def point_metrics(predictions, actuals) -> PointMetrics:
    """MAE and R^2 of point forecasts against actual outcomes."""
    p, t = _paired(predictions, actuals)
    return PointMetrics(mae=mae(p, t), r_squared=r_squared(p, t), n_eval=int(t.size))


def compare_forecasters(model_preds, baseline_preds, actuals) -> ComparisonReport:
    """Model-versus-baseline report with the relative MAE reduction."""
    model = point_metrics(model_preds, actuals)
    baseline = point_metrics(baseline_preds, actuals)
    if baseline.mae == 0.0:
        raise UndefinedMetricError("MAE reduction undefined: baseline MAE is zero")
    reduction = (baseline.mae - model.mae) / baseline.mae
    return ComparisonReport(model=model, baseline=baseline, mae_reduction=reduction)


def _paired(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise InvalidArgumentError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise InvalidArgumentError("empty inputs")
    return a, b


# ---------------------------------------------------------------------------
# export / import


def _format_float(v: float) -> str:
    return repr(float(v))


def export_curves(
    curves,
    out_dir,
    *,
    target_kind: str,
    config: SweepConfig,
    data_fingerprint: str | None = None,
) -> dict[str, str]:
    """Write the curves CSV and a JSON manifest; returns the paths.

    Exports are deterministic functions of the curves: floats are written
    in shortest round-trip form and unmeasured wall times as empty cells,
    so re-running the same seeded benchmark reproduces the files
    byte-for-byte.
    """
    if not curves:
        raise InvalidArgumentError("no curves to export")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"curves_{target_kind}.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for curve in curves:
            for p in curve.points:
                writer.writerow(
                    [
                        curve.method,
                        _format_float(p.alpha),
                        _format_float(p.error_rate),
                        _format_float(p.mean_width),
                        _format_float(p.width_stddev),
                        "" if p.wall_time_s is None else _format_float(p.wall_time_s),
                    ]
                )
    manifest_path = os.path.join(out_dir, f"manifest_{target_kind}.json")
    manifest = {
        "format": "peloton-benchmark",
        "version": 1,
        "target_kind": target_kind,
        "seed": config.seed,
        "config": config.to_dict(),
        "data_fingerprint": data_fingerprint,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": csv_path, "manifest": manifest_path}


def import_curves(csv_path) -> list[BenchmarkCurve]:
    """Read a curves CSV back into :class:`BenchmarkCurve` values."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise InvalidArgumentError(f"{csv_path}: not a curves CSV")
        by_method: dict[str, list[CurvePoint]] = {}
        order: list[str] = []
        for cells in reader:
            if not cells:
                continue
            method = cells[0]
            if method not in by_method:
                by_method[method] = []
                order.append(method)
            by_method[method].append(
                CurvePoint(
                    alpha=float(cells[1]),
                    error_rate=float(cells[2]),
                    mean_width=float(cells[3]),
                    width_stddev=float(cells[4]),
                    wall_time_s=None if cells[5] == "" else float(cells[5]),
                )
            )
    return [BenchmarkCurve(method=m, points=tuple(by_method[m])) for m in order]
