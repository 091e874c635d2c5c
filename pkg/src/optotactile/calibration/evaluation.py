"""Scoring, k-fold cross-validation, grid search, feature importance and fiber ablation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .models import ModelSpec, TrainedModel, fit_arrays


def rmse(predictions, truths) -> float:
    """Root mean square error, ``sqrt(mean((y - y_hat)**2))``."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if p.size == 0 or p.size != t.size:
        raise ValueError(f"rmse needs equal, non-empty inputs (got {p.size} and {t.size})")
    return math.sqrt(float(np.mean((t - p) ** 2)))


def kfold_indices(n: int, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into ``k`` disjoint, near-equal folds."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(perm, k)]


def cross_validate(spec: ModelSpec, X, y, k: int = 5, seed: int = 0) -> list[float]:
    """Per-fold RMSE, each fold scored by a model fitted on the other folds."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    scores = []
    for fold in kfold_indices(len(y), k, seed):
        mask = np.ones(len(y), dtype=bool)
        mask[fold] = False
        model = fit_arrays(spec, X[mask], y[mask], seed=seed)
        scores.append(rmse(model.predict(X[fold]), y[fold]))
    return scores


@dataclass
class GridPoint:
    spec: ModelSpec
    fold_scores: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))


@dataclass
class GridSearchResult:
    best: ModelSpec
    best_index: int
    points: list[GridPoint]

    @property
    def best_point(self) -> GridPoint:
        return self.points[self.best_index]


def expand_grid(kind: str, axes: dict) -> list[ModelSpec]:
    """Cartesian product of hyperparameter axes, in axis-then-value order."""
    keys = list(axes)
    return [ModelSpec(kind, dict(zip(keys, values))) for values in itertools.product(*axes.values())]


def grid_search(grid, X, y, k: int = 5, seed: int = 0) -> GridSearchResult:
    """Exhaustive search for the spec with the lowest mean CV RMSE; ties go to the earlier spec."""
    grid = list(grid)
    if not grid:
        raise ValueError("grid is empty")
    points = [GridPoint(spec, cross_validate(spec, X, y, k, seed)) for spec in grid]
    best_index = 0
    for i, point in enumerate(points):
        if point.mean < points[best_index].mean:
            best_index = i
    return GridSearchResult(grid[best_index], best_index, points)


@dataclass
class EvalReport:
    """Baseline (train-set), cross-validation and held-out RMSE for one fitted spec."""

    spec: ModelSpec
    target: str
    baseline: float
    cv_folds: list[float]
    test: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def cv_mean(self) -> float:
        return float(np.mean(self.cv_folds))


def evaluate(spec: ModelSpec, train: Dataset, test: Dataset | None, target: str,
             k: int = 5, seed: int = 0, cv_folds=None) -> tuple[TrainedModel, EvalReport]:
    """Refit ``spec`` on all of ``train`` and score it three ways."""
    X, y = train.xy(target)
    if cv_folds is None:
        cv_folds = cross_validate(spec, X, y, k, seed)
    model = fit_arrays(spec, X, y, target=target, seed=seed)
    model.metadata["fold_scores"] = list(cv_folds)
    baseline = rmse(model.predict(X), y)
    test_score = None
    if test is not None and len(test):
        Xt, yt = test.xy(target)
        test_score = rmse(model.predict(Xt), yt)
    return model, EvalReport(spec, target, baseline, list(cv_folds), test_score)


def feature_importance(model: TrainedModel) -> np.ndarray:
    """Impurity-based importance of each fiber in a fitted random forest; sums to 1."""
    if model.spec.kind != "random-forest":
        raise ValueError(f"feature importance needs a random-forest model, got {model.spec.kind}")
    return model.estimator.feature_importances()


def importance_order(importances) -> list[int]:
    """Feature indices from least to most important (stable on ties)."""
    return [int(i) for i in np.argsort(np.asarray(importances), kind="stable")]


def ablate_features(spec: ModelSpec, train: Dataset, test: Dataset, target: str,
                    order, seed: int = 0) -> dict[int, float]:
    """Test RMSE as fibers are dropped from least to most important.

    ``order`` lists all feature indices from least to most important. The
    subset of size ``m`` keeps the ``m`` most important fibers; columns stay
    in their original order so the 5-fiber case reproduces the full model.
    """
    order = [int(i) for i in order]
    n_features = train.a.shape[1]
    if sorted(order) != list(range(n_features)):
        raise ValueError(f"order must be a permutation of 0..{n_features - 1}, got {order}")
    X, y = train.xy(target)
    Xt, yt = test.xy(target)
    scores = {}
    for m in range(n_features, 0, -1):
        kept = sorted(order[n_features - m:])
        model = fit_arrays(spec, X[:, kept], y, target=target, seed=seed)
        scores[m] = rmse(model.predict(Xt[:, kept]), yt)
    return scores
