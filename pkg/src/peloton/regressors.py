"""Base learners wrapped by the conformal layer.

Three kinds behind one fit/predict contract:

* ``random_forest`` -- bagged regression trees, mean-of-trees prediction.
* ``quantile_forest`` -- same forest, but each tree keeps the training
  targets that landed in each leaf, so arbitrary quantiles can be read
  from the pooled leaf targets after a single fit.
* ``knn`` -- k-nearest-neighbour regressor on z-scored features, used as
  the difficulty estimator for normalized nonconformity scores (fit on
  absolute residuals) and as a cheap base learner.

Split search is delegated to scikit-learn's tree builder; the fitted
state is extracted into plain arrays so prediction, persistence, and
leaf-pool bookkeeping are fully owned here. Fits are deterministic given
``spec.seed`` (per-tree seeds are spawned from it), and a model persists
to a plain dict of lists that round-trips bit-exactly through JSON.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from .errors import (
    ConfigurationError,
    DimensionalityError,
    EmptyDatasetError,
    InvalidArgumentError,
)

REGRESSOR_KINDS = ("random_forest", "quantile_forest", "knn")


@dataclass(frozen=True)
class RegressorSpec:
    """Hyperparameters for one learner; identical spec + identical data
    give an identical fitted model.

    ``max_depth=None`` means unbounded. ``bootstrap=False`` trains every
    tree on the full sample (useful for exactly reproducible single-tree
    setups); the default resamples with replacement.
    """

    kind: str = "random_forest"
    tree_count: int = 100
    max_depth: int | None = None
    min_leaf_size: int = 5
    k: int = 10
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise InvalidArgumentError(f"unknown regressor kind {self.kind!r}")
        if self.tree_count < 1:
            raise InvalidArgumentError("tree_count must be >= 1")
        if self.min_leaf_size < 1:
            raise InvalidArgumentError("min_leaf_size must be >= 1")
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidArgumentError("max_depth must be >= 0 or None")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tree_count": self.tree_count,
            "max_depth": self.max_depth,
            "min_leaf_size": self.min_leaf_size,
            "k": self.k,
            "seed": self.seed,
            "bootstrap": self.bootstrap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressorSpec":
        return cls(**d)


@dataclass
class _Tree:
    """Array form of one fitted tree.

    ``feature < 0`` marks a leaf. ``pool_offset``/``pool_count`` index
    into ``pool_values`` (targets of the tree's training sample grouped by
    leaf); only quantile forests carry pools.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    pool_offset: np.ndarray | None = None
    pool_count: np.ndarray | None = None
    pool_values: np.ndarray | None = None

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = np.zeros_like(active)
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass
class _ForestState:
    trees: list[_Tree]
    y_min: float
    y_max: float


@dataclass
class _KnnState:
    mean: np.ndarray
    scale: np.ndarray
    points: np.ndarray  # standardized training features
    targets: np.ndarray


@dataclass
class FittedRegressor:
    """A fitted learner; immutable in use, deterministic in prediction."""

    spec: RegressorSpec
    n_features: int
    fingerprint: str
    _state: _ForestState | _KnnState = field(repr=False)

    # -- prediction ---------------------------------------------------

    def predict(self, X) -> np.ndarray:
        """Point prediction; for forests, the mean over per-tree leaf values."""
        X = self._check_matrix(X)
        if isinstance(self._state, _KnnState):
            return self._knn_mean(X)
        total = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self._state.trees:
            total += tree.predict(X)
        return total / len(self._state.trees)

    def predict_one(self, x) -> float:
        return float(self.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])

    def predict_quantile(self, X, q: float) -> np.ndarray:
        """Empirical q-quantile of the training targets pooled from the
        leaves X falls into, across all trees (linear interpolation
        between order statistics)."""
        if not 0.0 < q < 1.0:
            raise InvalidArgumentError(f"quantile level must be in (0, 1), got {q}")
        if self.spec.kind != "quantile_forest":
            raise ConfigurationError(
                f"predict_quantile requires a quantile_forest, not {self.spec.kind}"
            )
        X = self._check_matrix(X)
        leaves = [tree.apply(X) for tree in self._state.trees]
        out = np.empty(X.shape[0], dtype=np.float64)
        for i in range(X.shape[0]):
            pools = []
            for tree, leaf in zip(self._state.trees, leaves):
                node = leaf[i]
                off = tree.pool_offset[node]
                cnt = tree.pool_count[node]
                pools.append(tree.pool_values[off:off + cnt])
            out[i] = np.quantile(np.concatenate(pools), q)
        return out

    def predict_difficulty(self, X) -> np.ndarray:
        """Mean absolute residual of the k nearest training points; the
        model must have been fitted on (features -> absolute residuals)."""
        if self.spec.kind != "knn":
            raise ConfigurationError(
                f"predict_difficulty requires a knn model, not {self.spec.kind}"
            )
        return np.abs(self._knn_mean(self._check_matrix(X)))

    # -- internals ----------------------------------------------------

    def _check_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionalityError(
                f"expected feature matrix with {self.n_features} columns, "
                f"got shape {X.shape}"
            )
        return X

    def _knn_mean(self, X: np.ndarray) -> np.ndarray:
        st = self._state
        Q = (X - st.mean) / st.scale
        P = st.points
        d2 = np.maximum(
            (Q * Q).sum(axis=1)[:, None] + (P * P).sum(axis=1)[None, :] - 2.0 * Q @ P.T,
            0.0,
        )
        k = self.spec.k
        # stable argsort ties toward the lowest training index
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return st.targets[order].mean(axis=1)

    # -- persistence ----------------------------------------------------

    def to_state_dict(self) -> dict:
        if isinstance(self._state, _KnnState):
            state = {
                "mean": self._state.mean.tolist(),
                "scale": self._state.scale.tolist(),
                "points": self._state.points.tolist(),
                "targets": self._state.targets.tolist(),
            }
        else:
            trees = []
            for t in self._state.trees:
                d = {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                if t.pool_values is not None:
                    d["pool_offset"] = t.pool_offset.tolist()
                    d["pool_count"] = t.pool_count.tolist()
                    d["pool_values"] = t.pool_values.tolist()
                trees.append(d)
            state = {
                "trees": trees,
                "y_min": self._state.y_min,
                "y_max": self._state.y_max,
            }
        return {
            "spec": self.spec.to_dict(),
            "n_features": self.n_features,
            "fingerprint": self.fingerprint,
            "state": state,
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "FittedRegressor":
        spec = RegressorSpec.from_dict(d["spec"])
        raw = d["state"]
        if spec.kind == "knn":
            state = _KnnState(
                mean=np.asarray(raw["mean"], dtype=np.float64),
                scale=np.asarray(raw["scale"], dtype=np.float64),
                points=np.asarray(raw["points"], dtype=np.float64),
                targets=np.asarray(raw["targets"], dtype=np.float64),
            )
        else:
            trees = []
            for t in raw["trees"]:
                trees.append(
                    _Tree(
                        feature=np.asarray(t["feature"], dtype=np.int64),
                        threshold=np.asarray(t["threshold"], dtype=np.float64),
                        left=np.asarray(t["left"], dtype=np.int64),
                        right=np.asarray(t["right"], dtype=np.int64),
                        value=np.asarray(t["value"], dtype=np.float64),
                        pool_offset=(
                            np.asarray(t["pool_offset"], dtype=np.int64)
                            if "pool_offset" in t else None
                        ),
                        pool_count=(
                            np.asarray(t["pool_count"], dtype=np.int64)
                            if "pool_count" in t else None
                        ),
                        pool_values=(
                            np.asarray(t["pool_values"], dtype=np.float64)
                            if "pool_values" in t else None
                        ),
                    )
                )
            state = _ForestState(trees=trees, y_min=raw["y_min"], y_max=raw["y_max"])
        return cls(
            spec=spec,
            n_features=int(d["n_features"]),
            fingerprint=d["fingerprint"],
            _state=state,
        )


def training_fingerprint(spec: RegressorSpec, X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(spec.to_dict(), sort_keys=True).encode())
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.float64).tobytes())
    return h.hexdigest()


def fit(spec: RegressorSpec, X, y) -> FittedRegressor:
    """Fit a learner of ``spec.kind`` on a design matrix and targets.

    Deterministic given ``spec.seed``; raises on empty data or a feature
    matrix/target length mismatch.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionalityError(f"X must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n == 0:
        raise EmptyDatasetError("cannot fit on an empty dataset")
    if y.shape != (n,):
        raise DimensionalityError(f"y must have shape ({n},), got {y.shape}")

    if spec.kind == "knn":
        state = _fit_knn(spec, X, y)
    else:
        if n < spec.min_leaf_size:
            raise InvalidArgumentError(
                f"need at least min_leaf_size={spec.min_leaf_size} rows, got {n}"
            )
        state = _fit_forest(spec, X, y)
    return FittedRegressor(
        spec=spec,
        n_features=p,
        fingerprint=training_fingerprint(spec, X, y),
        _state=state,
    )


def _fit_knn(spec: RegressorSpec, X: np.ndarray, y: np.ndarray) -> _KnnState:
    n = X.shape[0]
    if n < spec.k:
        raise ConfigurationError(f"knn with k={spec.k} needs at least k points, got {n}")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return _KnnState(mean=mean, scale=scale, points=(X - mean) / scale, targets=y.copy())


def _fit_forest(spec: RegressorSpec, X: np.ndarray, y: np.ndarray) -> _ForestState:
    n, p = X.shape
    keep_pools = spec.kind == "quantile_forest"
    max_features = max(1, math.ceil(p / 3))
    children = np.random.SeedSequence(spec.seed).spawn(spec.tree_count)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        tree_seed = int(child.generate_state(1, dtype=np.uint32)[0])
        if spec.bootstrap:
            idx = rng.integers(0, n, size=n)
            Xb, yb = X[idx], y[idx]
        else:
            Xb, yb = X, y
        if spec.max_depth == 0:
            # root-only tree: a single leaf holding the whole sample
            tree = _Tree(
                feature=np.array([-2], dtype=np.int64),
                threshold=np.array([-2.0]),
                left=np.array([-1], dtype=np.int64),
                right=np.array([-1], dtype=np.int64),
                value=np.array([float(yb.mean())]),
            )
            if keep_pools:
                tree.pool_offset = np.array([0], dtype=np.int64)
                tree.pool_count = np.array([len(yb)], dtype=np.int64)
                tree.pool_values = yb.copy()
            trees.append(tree)
            continue
        learner = DecisionTreeRegressor(
            criterion="squared_error",
            max_depth=spec.max_depth,
            min_samples_leaf=spec.min_leaf_size,
            max_features=max_features,
            random_state=tree_seed,
        )
        learner.fit(Xb, yb)
        trees.append(_extract_tree(learner, Xb, yb, keep_pools))
    return _ForestState(trees=trees, y_min=float(y.min()), y_max=float(y.max()))


def _extract_tree(
    learner: DecisionTreeRegressor, Xb: np.ndarray, yb: np.ndarray, keep_pools: bool
) -> _Tree:
    t = learner.tree_
    tree = _Tree(
        feature=t.feature.astype(np.int64).copy(),
        threshold=t.threshold.astype(np.float64).copy(),
        left=t.children_left.astype(np.int64).copy(),
        right=t.children_right.astype(np.int64).copy(),
        value=t.value[:, 0, 0].astype(np.float64).copy(),
    )
    if keep_pools:
        leaves = learner.apply(Xb)
        order = np.argsort(leaves, kind="stable")
        sorted_leaves = leaves[order]
        pool_values = yb[order]
        node_count = t.node_count
        pool_count = np.bincount(sorted_leaves, minlength=node_count).astype(np.int64)
        pool_offset = np.zeros(node_count, dtype=np.int64)
        pool_offset[1:] = np.cumsum(pool_count)[:-1]
        tree.pool_offset = pool_offset
        tree.pool_count = pool_count
        tree.pool_values = pool_values.copy()
    return tree


def make_constant_forest(values_per_tree, spec: RegressorSpec | None = None) -> FittedRegressor:
    """Hand-construct a forest of depth-0 trees with the given leaf values.

    Test helper for exercising the prediction contract without a fit.
    """
    spec = spec or RegressorSpec(kind="random_forest", tree_count=len(values_per_tree))
    trees = []
    for v in values_per_tree:
        trees.append(
            _Tree(
                feature=np.array([-2], dtype=np.int64),
                threshold=np.array([-2.0]),
                left=np.array([-1], dtype=np.int64),
                right=np.array([-1], dtype=np.int64),
                value=np.array([float(v)]),
            )
        )
    state = _ForestState(trees=trees, y_min=float(min(values_per_tree)), y_max=float(max(values_per_tree)))
    return FittedRegressor(spec=spec, n_features=1, fingerprint="handmade", _state=state)


def make_pooled_quantile_stub(pool, n_features: int = 1) -> FittedRegressor:
    """Hand-construct a single-leaf quantile forest whose pool is ``pool``."""
    pool = np.asarray(pool, dtype=np.float64)
    spec = RegressorSpec(kind="quantile_forest", tree_count=1, max_depth=0, bootstrap=False)
    tree = _Tree(
        feature=np.array([-2], dtype=np.int64),
        threshold=np.array([-2.0]),
        left=np.array([-1], dtype=np.int64),
        right=np.array([-1], dtype=np.int64),
        value=np.array([float(pool.mean())]),
        pool_offset=np.array([0], dtype=np.int64),
        pool_count=np.array([len(pool)], dtype=np.int64),
        pool_values=pool.copy(),
    )
    state = _ForestState(trees=[tree], y_min=float(pool.min()), y_max=float(pool.max()))
    return FittedRegressor(spec=spec, n_features=n_features, fingerprint="handmade", _state=state)
