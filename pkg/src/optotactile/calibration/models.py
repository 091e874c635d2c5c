"""Regressors mapping five-fiber attenuation to force, torque or contact position.

Four model kinds are available: ordinary least squares, a CART regression
tree, a random forest of CART trees, and an RBF epsilon-SVR trained with SMO.
Each estimator exposes ``fit(X, y)``, ``predict(X)`` and a JSON-safe
``get_state`` / ``from_state`` pair used by :class:`TrainedModel`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .dataset import TARGETS, Dataset

KINDS = ("linear", "decision-tree", "random-forest", "svr")

_HYPERPARAMETERS = {
    "linear": {},
    "decision-tree": {"max_depth": None, "min_samples_leaf": 1},
    "random-forest": {
        "n_estimators": 100,
        "max_features": None,
        "bootstrap": True,
        "max_depth": None,
        "min_samples_leaf": 1,
    },
    "svr": {"kernel": "rbf", "C": 1.0, "gamma": 0.1, "epsilon": 0.01, "tol": 1e-3},
}


class SingularDesignError(np.linalg.LinAlgError):
    pass


class NotFittedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _HYPERPARAMETERS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        allowed = _HYPERPARAMETERS[self.kind]
        unknown = set(self.hyperparameters) - set(allowed)
        if unknown:
            raise ValueError(f"invalid hyperparameters for {self.kind}: {sorted(unknown)}")
        hp = {**allowed, **self.hyperparameters}
        _check_positive(hp, ("min_samples_leaf", "n_estimators", "C", "gamma", "tol"))
        for key in ("max_depth", "max_features"):
            if hp.get(key) is not None and hp[key] < 1:
                raise ValueError(f"{key} must be >= 1 or None")
        if hp.get("epsilon", 0.0) < 0:
            raise ValueError("epsilon must be non-negative")
        if self.kind == "svr" and hp["kernel"] != "rbf":
            raise ValueError("only the rbf kernel is supported")
        object.__setattr__(self, "hyperparameters", hp)

    def label(self) -> str:
        if not self.hyperparameters:
            return self.kind
        inner = ", ".join(f"{k}={v}" for k, v in sorted(self.hyperparameters.items()))
        return f"{self.kind}({inner})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters)}


def _check_positive(hp, keys):
    for key in keys:
        if key in hp and not hp[key] > 0:
            raise ValueError(f"{key} must be positive, got {hp[key]!r}")


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    return np.ascontiguousarray(X)


class LinearRegression:
    """Least squares with intercept, solved through the normal equations."""

    def __init__(self, rcond: float = 1e-12):
        self.rcond = rcond
        self.coef_ = None
        self.intercept_ = None

    def fit(self, X, y):
        X = _as_2d(X)
        y = np.asarray(y, dtype=float)
        design = np.column_stack([np.ones(len(X)), X])
        gram = design.T @ design
        # Scale-free singularity test on the Gram matrix.
        diag = np.sqrt(np.diag(gram))
        if np.any(diag == 0):
            raise SingularDesignError("design matrix has an all-zero column")
        scaled = gram / np.outer(diag, diag)
        if np.linalg.cond(scaled) > 1.0 / self.rcond:
            raise SingularDesignError("design matrix is rank deficient")
        beta = np.linalg.solve(gram, design.T @ y)
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        return self

    def predict(self, X):
        return _as_2d(X) @ self.coef_ + self.intercept_

    def get_state(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_}

    @classmethod
    def from_state(cls, state, **_):
        est = cls()
        est.coef_ = np.asarray(state["coef"], dtype=float)
        est.intercept_ = float(state["intercept"])
        return est


class DecisionTreeRegressor:
    def __init__(self, max_depth=None, min_samples_leaf=1, max_features=None, seed=0):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.seed = seed
        self.nodes_ = None
        self.n_features_ = None

    def fit(self, X, y, sample_idx=None):
        X = _as_2d(X)
        y = np.ascontiguousarray(y, dtype=float)
        if sample_idx is None:
            sample_idx = np.arange(len(y))
        d = X.shape[1]
        max_features = d if self.max_features is None else min(int(self.max_features), d)
        self.nodes_ = _kernels.build_tree(
            X, y, np.asarray(sample_idx, dtype=np.int64),
            -1 if self.max_depth is None else int(self.max_depth),
            int(self.min_samples_leaf), max_features, int(self.seed) % (2**32),
        )
        self.n_features_ = d
        return self

    @property
    def node_count(self) -> int:
        return len(self.nodes_[0])

    def predict(self, X):
        feature, threshold, left, right, value, _, _ = self.nodes_
        return _kernels.predict_tree(_as_2d(X), feature, threshold, left, right, value)

    def impurity_decrease(self) -> np.ndarray:
        """Summed squared-error reduction attributed to each feature."""
        feature, _, _, _, _, _, gain = self.nodes_
        out = np.zeros(self.n_features_)
        internal = feature >= 0
        np.add.at(out, feature[internal], gain[internal])
        return out

    def get_state(self):
        feature, threshold, left, right, value, count, gain = self.nodes_
        return {
            "n_features": self.n_features_,
            "feature": feature.tolist(),
            "threshold": threshold.tolist(),
            "left": left.tolist(),
            "right": right.tolist(),
            "value": value.tolist(),
            "n_node_samples": count.tolist(),
            "gain": gain.tolist(),
        }

    @classmethod
    def from_state(cls, state, **hp):
        est = cls(**{k: hp[k] for k in ("max_depth", "min_samples_leaf") if k in hp})
        est.n_features_ = int(state["n_features"])
        ints = lambda key: np.asarray(state[key], dtype=np.int64)  # noqa: E731
        floats = lambda key: np.asarray(state[key], dtype=float)  # noqa: E731
        est.nodes_ = (
            ints("feature"), floats("threshold"), ints("left"), ints("right"),
            floats("value"), ints("n_node_samples"), floats("gain"),
        )
        return est


def tree_seed(seed: int, index: int) -> int:
    """Per-tree RNG seed derived from the forest seed and the tree's position."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


class RandomForestRegressor:
    def __init__(self, n_estimators=100, max_features=None, bootstrap=True, max_depth=None,
                 min_samples_leaf=1, seed=0):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed
        self.trees_ = None

    def fit(self, X, y):
        X = _as_2d(X)
        y = np.ascontiguousarray(y, dtype=float)
        n = len(y)
        self.trees_ = []
        for t in range(int(self.n_estimators)):
            s = tree_seed(self.seed, t)
            if self.bootstrap:
                sample_idx = np.random.default_rng(s).integers(0, n, size=n)
            else:
                sample_idx = np.arange(n)
            tree = DecisionTreeRegressor(self.max_depth, self.min_samples_leaf, self.max_features, s)
            self.trees_.append(tree.fit(X, y, sample_idx))
        return self

    @property
    def n_features_(self):
        return self.trees_[0].n_features_

    def predict(self, X):
        X = _as_2d(X)
        total = np.zeros(len(X))
        for tree in self.trees_:
            total += tree.predict(X)
        return total / len(self.trees_)

    def feature_importances(self) -> np.ndarray:
        """Mean over trees of each tree's normalized impurity-decrease shares."""
        shares = []
        for tree in self.trees_:
            dec = tree.impurity_decrease()
            s = dec.sum()
            if s > 0:
                shares.append(dec / s)
        if not shares:
            return np.full(self.n_features_, 1.0 / self.n_features_)
        mean = np.mean(shares, axis=0)
        return mean / mean.sum()

    def get_state(self):
        return {"trees": [t.get_state() for t in self.trees_]}

    @classmethod
    def from_state(cls, state, **hp):
        est = cls(**{k: v for k, v in hp.items() if k != "seed"})
        est.trees_ = [DecisionTreeRegressor.from_state(t) for t in state["trees"]]
        return est


class EpsilonSVR:
    """Epsilon-insensitive support vector regression with an RBF kernel."""

    def __init__(self, C=1.0, gamma=0.1, epsilon=0.01, tol=1e-3, kernel="rbf", max_iter=10_000_000):
        self.C = C
        self.gamma = gamma
        self.epsilon = epsilon
        self.tol = tol
        self.kernel = kernel
        self.max_iter = max_iter
        self.support_vectors_ = None
        self.dual_coef_ = None
        self.intercept_ = None

    def fit(self, X, y):
        X = _as_2d(X)
        y = np.ascontiguousarray(y, dtype=float)
        K = _kernels.rbf_kernel(X, X, float(self.gamma))
        coef, rho, n_iter, violation = _kernels.smo_epsilon_svr(
            K, y, float(self.C), float(self.epsilon), float(self.tol), int(self.max_iter)
        )
        support = coef != 0.0
        self.support_ = np.flatnonzero(support)
        self.support_vectors_ = X[support].copy()
        self.dual_coef_ = coef[support]
        self.intercept_ = -float(rho)
        self.n_iter_ = int(n_iter)
        self.kkt_violation_ = float(violation)
        return self

    def predict(self, X):
        X = _as_2d(X)
        if len(self.dual_coef_) == 0:
            return np.full(len(X), self.intercept_)
        K = _kernels.rbf_kernel(X, self.support_vectors_, float(self.gamma))
        return K @ self.dual_coef_ + self.intercept_

    def get_state(self):
        return {
            "support_vectors": self.support_vectors_.tolist(),
            "dual_coef": self.dual_coef_.tolist(),
            "intercept": self.intercept_,
            "n_iter": self.n_iter_,
            "kkt_violation": self.kkt_violation_,
        }

    @classmethod
    def from_state(cls, state, **hp):
        est = cls(**hp)
        n_sv = len(state["dual_coef"])
        est.support_vectors_ = np.asarray(state["support_vectors"], dtype=float).reshape(n_sv, -1)
        est.dual_coef_ = np.asarray(state["dual_coef"], dtype=float)
        est.intercept_ = float(state["intercept"])
        est.n_iter_ = state.get("n_iter")
        est.kkt_violation_ = state.get("kkt_violation")
        return est


def make_estimator(spec: ModelSpec, seed: int = 0):
    hp = spec.hyperparameters
    if spec.kind == "linear":
        return LinearRegression()
    if spec.kind == "decision-tree":
        return DecisionTreeRegressor(hp["max_depth"], hp["min_samples_leaf"], seed=seed)
    if spec.kind == "random-forest":
        return RandomForestRegressor(seed=seed, **hp)
    return EpsilonSVR(**hp)


_ESTIMATOR_TYPES = {
    "linear": LinearRegression,
    "decision-tree": DecisionTreeRegressor,
    "random-forest": RandomForestRegressor,
    "svr": EpsilonSVR,
}


@dataclass
class TrainedModel:
    spec: ModelSpec
    target: str
    estimator: object
    n_features: int = 5
    metadata: dict = field(default_factory=dict)

    def predict(self, a) -> np.ndarray | float:
        """Predict for one feature vector (returns a float) or a matrix of them."""
        arr = np.asarray(a, dtype=float)
        single = arr.ndim == 1
        X = _as_2d(arr)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = self.estimator.predict(X)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {
            "kind": self.spec.kind,
            "target": self.target,
            "hyperparameters": dict(self.spec.hyperparameters),
            "parameters": self.estimator.get_state(),
            "metadata": {"n_features": self.n_features, "fold_scores": [], **self.metadata},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> TrainedModel:
        spec = ModelSpec(doc["kind"], doc["hyperparameters"])
        est = _ESTIMATOR_TYPES[spec.kind].from_state(doc["parameters"], **spec.hyperparameters)
        metadata = dict(doc.get("metadata", {}))
        n_features = int(metadata.pop("n_features", 5))
        return cls(spec, doc["target"], est, n_features, metadata)

    @classmethod
    def from_json(cls, text: str) -> TrainedModel:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> TrainedModel:
        return cls.from_json(Path(path).read_text())


def fit(spec: ModelSpec, train: Dataset, target: str, seed: int = 0, features=None) -> TrainedModel:
    """Fit ``spec`` on the training rows of ``train`` for ``target``.

    ``features`` optionally restricts the model to a subset of fiber columns
    (used by the fiber-count ablation).
    """
    if target not in TARGETS:
        raise ValueError(f"unknown target {target!r}")
    X, y = train.xy(target)
    if features is not None:
        X = X[:, list(features)]
    return fit_arrays(spec, X, y, target=target, seed=seed)


def fit_arrays(spec: ModelSpec, X, y, target: str = "force", seed: int = 0) -> TrainedModel:
    X = _as_2d(X)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot fit on an empty target")
    if len(X) != len(y):
        raise ValueError("feature and target lengths differ")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite target values")
    est = make_estimator(spec, seed).fit(X, y)
    meta = {"seed": seed}
    if spec.kind == "svr":
        meta.update(n_iter=est.n_iter_, kkt_violation=est.kkt_violation_)
    return TrainedModel(spec, target, est, X.shape[1], meta)

