"""Deterministic toy learners injected into the conformal layer by tests.

These are the package-facing counterparts of the plain-Python learners the
oracles refit; both sides implement the same tiny models so interval
comparisons isolate the conformal bookkeeping.
"""

import numpy as np


class MeanModel:
    """Predicts the training-target mean everywhere."""

    def __init__(self, y):
        self.value = float(np.mean(y))

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.value, dtype=np.float64)


class SlopeModel:
    """Least-squares line on the first feature only."""

    def __init__(self, X, y):
        x1 = np.asarray(X, dtype=np.float64)[:, 0]
        y = np.asarray(y, dtype=np.float64)
        xm, ym = x1.mean(), y.mean()
        var = float(((x1 - xm) ** 2).sum())
        self.b = float(((x1 - xm) * (y - ym)).sum() / var) if var > 0 else 0.0
        self.a = float(ym - self.b * xm)

    def predict(self, X):
        return self.a + self.b * np.asarray(X, dtype=np.float64)[:, 0]


class ConstantDifficulty:
    """sigma(x) = c for every x."""

    def __init__(self, c=1.0):
        self.c = float(c)

    def predict_difficulty(self, X):
        return np.full(np.asarray(X).shape[0], self.c, dtype=np.float64)


class FirstFeatureDifficulty:
    """sigma(x) = 1 + |x_0|, a fixed function of the features."""

    def predict_difficulty(self, X):
        return 1.0 + np.abs(np.asarray(X, dtype=np.float64)[:, 0])


def mean_learner(X, y, seed):
    return MeanModel(y)


def slope_learner(X, y, seed):
    return SlopeModel(X, y)


def constant_difficulty_learner(X, y, seed):
    return ConstantDifficulty(1.0)


def feature_difficulty_learner(X, y, seed):
    return FirstFeatureDifficulty()


# oracle-side closures over the same toy models, in plain Python


def oracle_mean_fit(X, y):
    value = sum(y) / len(y)
    return lambda x: value


def oracle_slope_fit(X, y):
    x1 = [row[0] for row in X]
    n = len(y)
    xm = sum(x1) / n
    ym = sum(y) / n
    var = sum((v - xm) ** 2 for v in x1)
    b = sum((v - xm) * (t - ym) for v, t in zip(x1, y)) / var if var > 0 else 0.0
    a = ym - b * xm
    return lambda x: a + b * x[0]
