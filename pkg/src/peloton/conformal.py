"""Conformal interval construction around arbitrary base learners.

Eight procedures behind one calibrate / predict-interval interface:

========================================  =========  ==================
method                                    fits       interval width
========================================  =========  ==================
``jackknife_plus``                        n          near-constant in x
``jackknife_minmax``                      n          near-constant, conservative
``jackknife_plus_after_bootstrap``        B          near-constant in x
``jackknife_minmax_after_bootstrap``      B          near-constant, conservative
``cv_plus``                               K          near-constant in x
``cv_minmax``                             K          near-constant, conservative
``cqr``                                   1          adaptive in x
``icp``                                   1 (+ knn)  adaptive in x
========================================  =========  ==================

The resampling families (jackknife, CV, after-bootstrap) all reduce to
the same prediction-time algebra: an out-of-sample predictor value
``m_i(x)`` per training point plus a residual ``R_i = |y_i - m_i(x_i)|``,
combined through finite-sample rank quantiles. ``icp`` normalizes split
residuals by a k-nearest-neighbour difficulty estimate; ``cqr``
conformalizes the pooled-leaf quantile bands of a quantile forest.

Rank quantiles are the clamped finite-sample order statistics: the
``ceil((1-alpha)(n+1))``-th smallest value, falling back to the maximum
when the rank exceeds n (a finite stand-in for the +infinity the strict
theory would return at very small n or alpha).

Alpha is supplied at prediction time; calibration is alpha-free for every
method except ``cqr``, whose band quantiles depend on alpha structurally.
CQR per-alpha state is computed lazily and cached, so sweeping alphas
never refits the forest.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import regressors
from .data import Dataset, FeatureSchema, hash_tag
from .domain import PredictionInterval, StageFeatures
from .errors import (
    ConfigurationError,
    DimensionalityError,
    InsufficientDataError,
    InvalidArgumentError,
)
from .regressors import FittedRegressor, RegressorSpec, training_fingerprint

METHODS = (
    "jackknife_plus",
    "jackknife_minmax",
    "jackknife_plus_after_bootstrap",
    "jackknife_minmax_after_bootstrap",
    "cv_plus",
    "cv_minmax",
    "cqr",
    "icp",
)

_FAMILY = {
    "jackknife_plus": "loo",
    "jackknife_minmax": "loo",
    "jackknife_plus_after_bootstrap": "bootstrap",
    "jackknife_minmax_after_bootstrap": "bootstrap",
    "cv_plus": "cv",
    "cv_minmax": "cv",
    "cqr": "cqr",
    "icp": "icp",
}

MAX_BOOTSTRAP_ATTEMPTS = 10


# ---------------------------------------------------------------------------
# rank quantiles


def _rank(n: int, alpha: float) -> int:
    """Unclamped 1-based rank ceil((1-alpha)(n+1))."""
    return math.ceil((1.0 - alpha) * (n + 1))


def quantile_hi(values, alpha: float) -> float:
    """Clamped upper rank quantile of a non-empty collection."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise InvalidArgumentError("quantile of an empty collection")
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must be in (0, 1), got {alpha}")
    return float(v[min(_rank(v.size, alpha), v.size) - 1])


def quantile_lo(values, alpha: float) -> float:
    """Lower rank quantile, the mirror image of :func:`quantile_hi`."""
    return -quantile_hi(-np.asarray(values, dtype=np.float64), alpha)


# ---------------------------------------------------------------------------
# configuration and catalog


@dataclass(frozen=True)
class MethodDescriptor:
    method: str
    adaptive: bool
    cost: str
    description: str


def method_catalog() -> list[MethodDescriptor]:
    """Descriptors for the eight supported methods."""
    return [
        MethodDescriptor(
            "jackknife_plus", False, "loo",
            "rank quantiles of leave-one-out predictions shifted by LOO residuals",
        ),
        MethodDescriptor(
            "jackknife_minmax", False, "loo",
            "extreme leave-one-out predictions padded by the residual quantile",
        ),
        MethodDescriptor(
            "jackknife_plus_after_bootstrap", False, "bootstrap",
            "jackknife+ with out-of-bag aggregates standing in for LOO models",
        ),
        MethodDescriptor(
            "jackknife_minmax_after_bootstrap", False, "bootstrap",
            "minmax over out-of-bag aggregates padded by the residual quantile",
        ),
        MethodDescriptor(
            "cv_plus", False, "cv",
            "jackknife+ with K fold models standing in for LOO models",
        ),
        MethodDescriptor(
            "cv_minmax", False, "cv",
            "minmax over fold models padded by the residual quantile",
        ),
        MethodDescriptor(
            "cqr", True, "split",
            "conformalized quantile-forest bands, width adapts to the features",
        ),
        MethodDescriptor(
            "icp", True, "split",
            "split residuals normalized by a knn difficulty estimate",
        ),
    ]


@dataclass(frozen=True)
class MethodConfig:
    """Everything needed to calibrate one method.

    Only the fields relevant to ``method`` are consulted: ``folds`` for
    the CV family, ``bootstrap_count`` for the after-bootstrap family,
    ``calibration_fraction``/``beta`` for the split methods. ``beta=None``
    uses the default smoothing 0.01 * std of the calibration absolute
    residuals. ``cqr_band_policy`` selects how CQR picks its band
    quantile levels: ``"fixed"`` (default) keeps ``cqr_fixed_levels`` for
    every alpha, so the conformal margin alone absorbs the target
    miscoverage and widths are monotone in alpha by construction;
    ``"alpha_half"`` refits the band at (alpha/2, 1-alpha/2) per requested
    alpha, the textbook recipe, whose widths can wiggle across an alpha
    grid. Both are conformally valid.
    """

    method: str
    base_spec: RegressorSpec = RegressorSpec()
    quantile_spec: RegressorSpec | None = None
    difficulty_spec: RegressorSpec | None = None
    folds: int = 5
    bootstrap_count: int = 30
    calibration_fraction: float = 0.25
    beta: float | None = None
    cqr_band_policy: str = "fixed"
    cqr_fixed_levels: tuple[float, float] = (0.05, 0.95)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if self.folds < 2:
            raise InvalidArgumentError("folds must be >= 2")
        if self.bootstrap_count < 2:
            raise InvalidArgumentError("bootstrap_count must be >= 2")
        if not 0.0 < self.calibration_fraction < 1.0:
            raise InvalidArgumentError("calibration_fraction must be in (0, 1)")
        if self.beta is not None and self.beta < 0:
            raise InvalidArgumentError("beta must be >= 0")
        if self.cqr_band_policy not in ("alpha_half", "fixed"):
            raise InvalidArgumentError(f"unknown band policy {self.cqr_band_policy!r}")
        lo, hi = self.cqr_fixed_levels
        if not 0.0 < lo < hi < 1.0:
            raise InvalidArgumentError("cqr_fixed_levels must satisfy 0 < lo < hi < 1")

    @property
    def family(self) -> str:
        return _FAMILY[self.method]

    def resolved_quantile_spec(self) -> RegressorSpec:
        if self.quantile_spec is not None:
            if self.quantile_spec.kind != "quantile_forest":
                raise ConfigurationError("quantile_spec must have kind 'quantile_forest'")
            return self.quantile_spec
        return replace(self.base_spec, kind="quantile_forest")

    def resolved_difficulty_spec(self) -> RegressorSpec:
        if self.difficulty_spec is not None:
            if self.difficulty_spec.kind != "knn":
                raise ConfigurationError("difficulty_spec must have kind 'knn'")
            return self.difficulty_spec
        return RegressorSpec(kind="knn", k=10)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "base_spec": self.base_spec.to_dict(),
            "quantile_spec": None if self.quantile_spec is None else self.quantile_spec.to_dict(),
            "difficulty_spec": (
                None if self.difficulty_spec is None else self.difficulty_spec.to_dict()
            ),
            "folds": self.folds,
            "bootstrap_count": self.bootstrap_count,
            "calibration_fraction": self.calibration_fraction,
            "beta": self.beta,
            "cqr_band_policy": self.cqr_band_policy,
            "cqr_fixed_levels": list(self.cqr_fixed_levels),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MethodConfig":
        d = dict(d)
        d["base_spec"] = RegressorSpec.from_dict(d["base_spec"])
        if d.get("quantile_spec") is not None:
            d["quantile_spec"] = RegressorSpec.from_dict(d["quantile_spec"])
        if d.get("difficulty_spec") is not None:
            d["difficulty_spec"] = RegressorSpec.from_dict(d["difficulty_spec"])
        d["cqr_fixed_levels"] = tuple(d.get("cqr_fixed_levels", (0.05, 0.95)))
        return cls(**d)


# ---------------------------------------------------------------------------
# calibration state


@dataclass
class _ResampleState:
    """Shared state of the jackknife / CV / after-bootstrap families."""

    family: str  # "loo" | "cv" | "bootstrap"
    models: list[FittedRegressor]
    residuals: np.ndarray
    fold_of_point: np.ndarray | None = None
    bag_indices: np.ndarray | None = None  # (n_models, n_points) bootstrap draws
    oob_mask: np.ndarray | None = None  # (n_points, n_models) 0/1
    _oob_weights: np.ndarray | None = field(default=None, repr=False)

    @property
    def oob_weights(self) -> np.ndarray:
        if self._oob_weights is None:
            counts = self.oob_mask.sum(axis=1, keepdims=True)
            self._oob_weights = self.oob_mask / counts
        return self._oob_weights

    def model_predictions(self, X: np.ndarray) -> np.ndarray:
        return np.stack([m.predict(X) for m in self.models], axis=1)

    def point_matrix(self, X: np.ndarray) -> np.ndarray:
        """m_i(x) for every test row x and training point i."""
        P = self.model_predictions(X)
        if self.family == "loo":
            return P
        if self.family == "cv":
            return P[:, self.fold_of_point]
        return P @ self.oob_weights.T


@dataclass
class _IcpState:
    base_model: FittedRegressor
    difficulty_model: FittedRegressor
    beta: float
    scores: np.ndarray
    train_idx: np.ndarray | None = None
    cal_idx: np.ndarray | None = None


@dataclass
class _CqrState:
    qrf: FittedRegressor
    cal_X: np.ndarray
    cal_y: np.ndarray
    band_policy: str
    fixed_levels: tuple[float, float]
    train_idx: np.ndarray | None = None
    cal_idx: np.ndarray | None = None
    margin_cache: dict[float, float] = field(default_factory=dict)

    def band_levels(self, alpha: float) -> tuple[float, float]:
        if self.band_policy == "fixed":
            return self.fixed_levels
        return alpha / 2.0, 1.0 - alpha / 2.0

    def bands(self, X: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        lo_level, hi_level = self.band_levels(alpha)
        lo = self.qrf.predict_quantile(X, lo_level)
        hi = self.qrf.predict_quantile(X, hi_level)
        # pooled-leaf quantiles can cross at extreme x; swap before use
        return np.minimum(lo, hi), np.maximum(lo, hi)

    def margin(self, alpha: float) -> float:
        if alpha not in self.margin_cache:
            lo, hi = self.bands(self.cal_X, alpha)
            scores = np.maximum(lo - self.cal_y, self.cal_y - hi)
            self.margin_cache[alpha] = quantile_hi(scores, alpha)
        return self.margin_cache[alpha]


@dataclass
class ConformalModel:
    """A calibrated conformal predictor.

    Immutable once calibrated; ``predict_interval`` is deterministic and
    safe for concurrent callers (the CQR margin cache only ever fills in
    the same values).
    """

    config: MethodConfig
    n_features: int
    n_train: int
    data_fingerprint: str
    state: _ResampleState | _IcpState | _CqrState
    schema: FeatureSchema | None = None

    @property
    def method(self) -> str:
        return self.config.method

    def _encode(self, x) -> np.ndarray:
        if isinstance(x, StageFeatures):
            if self.schema is None:
                raise DimensionalityError(
                    "model was calibrated on raw matrices; pass a feature vector"
                )
            X = self.schema.encode(x).reshape(1, -1)
        else:
            X = np.asarray(x, dtype=np.float64)
            if X.ndim == 1:
                X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionalityError(
                f"expected {self.n_features} features, got shape {X.shape}"
            )
        return X

    def encode_rows(self, rows) -> np.ndarray:
        if self.schema is None:
            raise DimensionalityError("model was calibrated on raw matrices")
        return self.schema.encode_rows(rows)

    # -- prediction -----------------------------------------------------

    def predict_interval(self, x, alpha: float) -> PredictionInterval:
        """Interval for one feature vector (or StageFeatures) at ``alpha``."""
        bounds = self.predict_intervals(self._encode(x), [alpha])[0, 0]
        return PredictionInterval(
            lower=float(bounds[0]), upper=float(bounds[1]),
            alpha=alpha, method=self.method,
        )

    def predict_intervals(self, X, alphas) -> np.ndarray:
        """Bounds for a whole test matrix at several alphas at once.

        Returns an array of shape ``(n_test, n_alphas, 2)``. Batching
        matters for the resampling families, where every interval needs
        the predictions of all stored models.
        """
        X = self._encode(X)
        alphas = [float(a) for a in alphas]
        for a in alphas:
            if not 0.0 < a < 1.0:
                raise InvalidArgumentError(f"alpha must be in (0, 1), got {a}")
        out = np.empty((X.shape[0], len(alphas), 2), dtype=np.float64)

        if isinstance(self.state, _ResampleState):
            self._resample_intervals(X, alphas, out)
        elif isinstance(self.state, _IcpState):
            self._icp_intervals(X, alphas, out)
        else:
            self._cqr_intervals(X, alphas, out)

        # A construction can cross at extreme alphas (e.g. a negative CQR
        # margin larger than the band). The honest degenerate output is the
        # midpoint with zero width, which also keeps widths monotone in
        # alpha.
        lower, upper = out[:, :, 0], out[:, :, 1]
        crossed = lower > upper
        if crossed.any():
            mid = 0.5 * (lower + upper)
            out[:, :, 0] = np.where(crossed, mid, lower)
            out[:, :, 1] = np.where(crossed, mid, upper)
        return out

    def _resample_intervals(self, X, alphas, out) -> None:
        st = self.state
        M = st.point_matrix(X)
        R = st.residuals
        n_pts = R.size
        if "minmax" in self.method:
            lo_base = M.min(axis=1)
            hi_base = M.max(axis=1)
            for j, a in enumerate(alphas):
                pad = quantile_hi(R, a)
                out[:, j, 0] = lo_base - pad
                out[:, j, 1] = hi_base + pad
        else:
            lo_sorted = np.sort(M - R[None, :], axis=1)
            hi_sorted = np.sort(M + R[None, :], axis=1)
            for j, a in enumerate(alphas):
                r = _rank(n_pts, a)
                out[:, j, 0] = lo_sorted[:, max(n_pts - r, 0)]
                out[:, j, 1] = hi_sorted[:, min(r, n_pts) - 1]

    def _icp_intervals(self, X, alphas, out) -> None:
        st = self.state
        point = st.base_model.predict(X)
        sigma = st.difficulty_model.predict_difficulty(X)
        denom = sigma + st.beta
        for j, a in enumerate(alphas):
            s = quantile_hi(st.scores, a)
            out[:, j, 0] = point - s * denom
            out[:, j, 1] = point + s * denom

    def _cqr_intervals(self, X, alphas, out) -> None:
        st = self.state
        for j, a in enumerate(alphas):
            lo, hi = st.bands(X, a)
            margin = st.margin(a)
            out[:, j, 0] = lo - margin
            out[:, j, 1] = hi + margin

    def predict_point(self, x) -> float:
        return float(self.predict_points(self._encode(x))[0])

    def predict_points(self, X) -> np.ndarray:
        """Point prediction consistent with the method's machinery."""
        X = self._encode(X)
        if isinstance(self.state, _IcpState):
            return self.state.base_model.predict(X)
        if isinstance(self.state, _CqrState):
            return self.state.qrf.predict(X)
        return self.state.model_predictions(X).mean(axis=1)

    # -- persistence ------------------------------------------------------

    def to_state_dict(self) -> dict:
        st = self.state
        if isinstance(st, _ResampleState):
            state = {
                "family": st.family,
                "models": [m.to_state_dict() for m in st.models],
                "residuals": st.residuals.tolist(),
                "fold_of_point": None if st.fold_of_point is None else st.fold_of_point.tolist(),
                "bag_indices": None if st.bag_indices is None else st.bag_indices.tolist(),
                "oob_mask": None if st.oob_mask is None else st.oob_mask.tolist(),
            }
        elif isinstance(st, _IcpState):
            state = {
                "family": "icp",
                "base_model": st.base_model.to_state_dict(),
                "difficulty_model": st.difficulty_model.to_state_dict(),
                "beta": st.beta,
                "scores": st.scores.tolist(),
                "train_idx": None if st.train_idx is None else st.train_idx.tolist(),
                "cal_idx": None if st.cal_idx is None else st.cal_idx.tolist(),
            }
        else:
            state = {
                "family": "cqr",
                "qrf": st.qrf.to_state_dict(),
                "cal_X": st.cal_X.tolist(),
                "cal_y": st.cal_y.tolist(),
                "band_policy": st.band_policy,
                "fixed_levels": list(st.fixed_levels),
                "train_idx": None if st.train_idx is None else st.train_idx.tolist(),
                "cal_idx": None if st.cal_idx is None else st.cal_idx.tolist(),
            }
        return {
            "config": self.config.to_dict(),
            "n_features": self.n_features,
            "n_train": self.n_train,
            "data_fingerprint": self.data_fingerprint,
            "schema": None if self.schema is None else self.schema.to_dict(),
            "state": state,
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "ConformalModel":
        raw = d["state"]
        family = raw["family"]
        def _opt_int_array(v):
            return None if v is None else np.asarray(v, dtype=np.int64)

        if family in ("loo", "cv", "bootstrap"):
            state = _ResampleState(
                family=family,
                models=[FittedRegressor.from_state_dict(m) for m in raw["models"]],
                residuals=np.asarray(raw["residuals"], dtype=np.float64),
                fold_of_point=_opt_int_array(raw["fold_of_point"]),
                bag_indices=_opt_int_array(raw["bag_indices"]),
                oob_mask=(
                    None if raw["oob_mask"] is None
                    else np.asarray(raw["oob_mask"], dtype=np.float64)
                ),
            )
        elif family == "icp":
            state = _IcpState(
                base_model=FittedRegressor.from_state_dict(raw["base_model"]),
                difficulty_model=FittedRegressor.from_state_dict(raw["difficulty_model"]),
                beta=float(raw["beta"]),
                scores=np.asarray(raw["scores"], dtype=np.float64),
                train_idx=_opt_int_array(raw["train_idx"]),
                cal_idx=_opt_int_array(raw["cal_idx"]),
            )
        else:
            state = _CqrState(
                qrf=FittedRegressor.from_state_dict(raw["qrf"]),
                cal_X=np.asarray(raw["cal_X"], dtype=np.float64),
                cal_y=np.asarray(raw["cal_y"], dtype=np.float64),
                band_policy=raw["band_policy"],
                fixed_levels=tuple(raw["fixed_levels"]),
                train_idx=_opt_int_array(raw["train_idx"]),
                cal_idx=_opt_int_array(raw["cal_idx"]),
            )
        return cls(
            config=MethodConfig.from_dict(d["config"]),
            n_features=int(d["n_features"]),
            n_train=int(d["n_train"]),
            data_fingerprint=d["data_fingerprint"],
            state=state,
            schema=None if d["schema"] is None else FeatureSchema.from_dict(d["schema"]),
        )


def predict_interval(model: ConformalModel, x, alpha: float) -> PredictionInterval:
    """Functional spelling of :meth:`ConformalModel.predict_interval`."""
    return model.predict_interval(x, alpha)


# ---------------------------------------------------------------------------
# calibration


def _as_matrix(data, include_weather: bool):
    if isinstance(data, Dataset):
        return (
            data.matrix(include_weather),
            np.asarray(data.targets, dtype=np.float64),
            data.schema(include_weather),
        )
    X, y = data
    return (
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        None,
    )


def _default_learner(spec: RegressorSpec):
    def factory(X, y, seed: int):
        return regressors.fit(replace(spec, seed=int(seed)), X, y)

    return factory


def _derived_seeds(config_seed: int, label: str, count: int) -> np.ndarray:
    ss = np.random.SeedSequence((hash_tag(label), config_seed))
    return ss.generate_state(count, dtype=np.uint32)


def _split_indices(n: int, fraction: float, config_seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic proper-train / calibration split for ICP and CQR."""
    n_cal = int(round(n * fraction))
    if n_cal < 10:
        raise InsufficientDataError(
            f"calibration split needs >= 10 points, got {n_cal} of {n}"
        )
    if n - n_cal < 1:
        raise InsufficientDataError("no training points left after the calibration split")
    rng = np.random.default_rng(np.random.SeedSequence((hash_tag("split"), config_seed)))
    perm = rng.permutation(n)
    return perm[n_cal:], perm[:n_cal]


def calibrate(
    config: MethodConfig,
    data,
    *,
    include_weather: bool = True,
    base_learner=None,
    quantile_learner=None,
    difficulty_learner=None,
) -> ConformalModel:
    """Fit the calibration state for one method.

    ``data`` is a :class:`Dataset` or an ``(X, y)`` pair. The learner
    arguments accept ``f(X, y, seed) -> fitted model`` factories and
    default to :func:`peloton.regressors.fit` with the configured specs;
    injecting cheap deterministic learners is how the test oracles drive
    this layer. Deterministic given ``config.seed``.
    """
    models, _ = calibrate_suite(
        [config],
        data,
        include_weather=include_weather,
        base_learner=base_learner,
        quantile_learner=quantile_learner,
        difficulty_learner=difficulty_learner,
    )
    return models[config.method]


def calibrate_suite(
    configs,
    data,
    *,
    include_weather: bool = True,
    base_learner=None,
    quantile_learner=None,
    difficulty_learner=None,
) -> tuple[dict[str, ConformalModel], dict[str, float]]:
    """Calibrate several methods, sharing resampling state within a family.

    ``jackknife_plus``/``jackknife_minmax`` consume the same leave-one-out
    models (likewise the CV and after-bootstrap pairs), so calibrating
    them together costs one set of fits. Returns ``(models, seconds)``
    where ``seconds[method]`` is the wall-clock calibration cost of the
    method's family (shared members report the same figure).
    """
    X, y, schema = _as_matrix(data, include_weather)
    n = X.shape[0]
    data_fp = training_fingerprint(RegressorSpec(), X, y)

    models: dict[str, ConformalModel] = {}
    seconds: dict[str, float] = {}
    family_cache: dict[tuple, tuple[object, float]] = {}

    for config in configs:
        fam = config.family
        learner = base_learner or _default_learner(config.base_spec)
        if fam in ("loo", "cv", "bootstrap"):
            key = (
                fam, config.seed, config.base_spec,
                config.folds if fam == "cv" else None,
                config.bootstrap_count if fam == "bootstrap" else None,
                base_learner,
            )
            if key not in family_cache:
                t0 = time.perf_counter()
                if fam == "loo":
                    state = _fit_loo(config, X, y, learner)
                elif fam == "cv":
                    state = _fit_cv(config, X, y, learner)
                else:
                    state = _fit_bootstrap(config, X, y, learner)
                family_cache[key] = (state, time.perf_counter() - t0)
            state, elapsed = family_cache[key]
        elif fam == "icp":
            t0 = time.perf_counter()
            state = _fit_icp(config, X, y, learner, difficulty_learner)
            elapsed = time.perf_counter() - t0
        else:
            t0 = time.perf_counter()
            state = _fit_cqr(config, X, y, quantile_learner)
            elapsed = time.perf_counter() - t0

        models[config.method] = ConformalModel(
            config=config,
            n_features=X.shape[1],
            n_train=n,
            data_fingerprint=data_fp,
            state=state,
            schema=schema,
        )
        seconds[config.method] = elapsed
    return models, seconds


def _fit_loo(config: MethodConfig, X, y, learner) -> _ResampleState:
    n = X.shape[0]
    if n < 3:
        raise InsufficientDataError(f"leave-one-out needs n >= 3, got {n}")
    seeds = _derived_seeds(config.seed, "loo", n)
    models = []
    residuals = np.empty(n, dtype=np.float64)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        model = learner(X[mask], y[mask], int(seeds[i]))
        mask[i] = True
        models.append(model)
        residuals[i] = abs(y[i] - float(model.predict(X[i : i + 1])[0]))
    return _ResampleState(family="loo", models=models, residuals=residuals)


def _fit_cv(config: MethodConfig, X, y, learner) -> _ResampleState:
    n = X.shape[0]
    K = config.folds
    if n < K:
        raise InsufficientDataError(f"{K}-fold CV needs n >= {K}, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence((hash_tag("cv"), config.seed)))
    perm = rng.permutation(n)
    folds = np.array_split(perm, K)
    seeds = _derived_seeds(config.seed, "cv-fit", K)
    models = []
    fold_of_point = np.empty(n, dtype=np.int64)
    residuals = np.empty(n, dtype=np.float64)
    for k, fold in enumerate(folds):
        train_mask = np.ones(n, dtype=bool)
        train_mask[fold] = False
        model = learner(X[train_mask], y[train_mask], int(seeds[k]))
        models.append(model)
        fold_of_point[fold] = k
        residuals[fold] = np.abs(y[fold] - model.predict(X[fold]))
    return _ResampleState(
        family="cv", models=models, residuals=residuals, fold_of_point=fold_of_point
    )


def _fit_bootstrap(config: MethodConfig, X, y, learner) -> _ResampleState:
    n = X.shape[0]
    B = config.bootstrap_count
    oob_mask = None
    for attempt in range(MAX_BOOTSTRAP_ATTEMPTS):
        rng = np.random.default_rng(
            np.random.SeedSequence((hash_tag("bootstrap"), config.seed, attempt))
        )
        draws = rng.integers(0, n, size=(B, n))
        mask = np.ones((n, B), dtype=np.float64)
        for b in range(B):
            mask[np.unique(draws[b]), b] = 0.0
        if mask.sum(axis=1).min() > 0:
            oob_mask = mask
            break
    if oob_mask is None:
        raise ConfigurationError(
            f"some training point was in-bag for all {B} bootstrap samples "
            f"in {MAX_BOOTSTRAP_ATTEMPTS} attempts; increase bootstrap_count"
        )
    seeds = _derived_seeds(config.seed, "bootstrap-fit", B)
    models = [learner(X[draws[b]], y[draws[b]], int(seeds[b])) for b in range(B)]
    state = _ResampleState(
        family="bootstrap", models=models, residuals=np.empty(n),
        bag_indices=draws, oob_mask=oob_mask,
    )
    P_train = state.model_predictions(X)  # (n, B)
    agg = (P_train * state.oob_weights).sum(axis=1)
    state.residuals = np.abs(y - agg)
    return state


def _fit_icp(config: MethodConfig, X, y, learner, difficulty_learner) -> _IcpState:
    n = X.shape[0]
    train_idx, cal_idx = _split_indices(n, config.calibration_fraction, config.seed)
    seeds = _derived_seeds(config.seed, "icp", 2)
    base = learner(X[train_idx], y[train_idx], int(seeds[0]))

    train_resid = np.abs(y[train_idx] - base.predict(X[train_idx]))
    if difficulty_learner is None:
        difficulty_learner = _default_learner(config.resolved_difficulty_spec())
    difficulty = difficulty_learner(X[train_idx], train_resid, int(seeds[1]))

    cal_resid = np.abs(y[cal_idx] - base.predict(X[cal_idx]))
    beta = config.beta if config.beta is not None else 0.01 * float(np.std(cal_resid))
    sigma_cal = difficulty.predict_difficulty(X[cal_idx])
    denom = sigma_cal + beta
    if np.any(denom <= 0.0):
        raise ConfigurationError(
            "zero difficulty and zero beta make scores undefined; set beta > 0"
        )
    scores = cal_resid / denom
    return _IcpState(
        base_model=base, difficulty_model=difficulty, beta=beta, scores=scores,
        train_idx=train_idx, cal_idx=cal_idx,
    )


def _fit_cqr(config: MethodConfig, X, y, quantile_learner) -> _CqrState:
    n = X.shape[0]
    train_idx, cal_idx = _split_indices(n, config.calibration_fraction, config.seed)
    seeds = _derived_seeds(config.seed, "cqr", 1)
    if quantile_learner is None:
        quantile_learner = _default_learner(config.resolved_quantile_spec())
    qrf = quantile_learner(X[train_idx], y[train_idx], int(seeds[0]))
    return _CqrState(
        qrf=qrf,
        cal_X=X[cal_idx].copy(),
        cal_y=y[cal_idx].copy(),
        band_policy=config.cqr_band_policy,
        fixed_levels=config.cqr_fixed_levels,
        train_idx=train_idx,
        cal_idx=cal_idx,
    )
