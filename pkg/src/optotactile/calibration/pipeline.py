"""Per-target model selection: grid-search every model kind, compare, pick a winner."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .dataset import Dataset
from .evaluation import EvalReport, evaluate, expand_grid, grid_search
from .models import KINDS, ModelSpec, TrainedModel

log = logging.getLogger(__name__)

_FOREST_FEATURES = [1, 2, 3, 5]

# SVR settings are quoted for a 0-6 N force target. The torque target spans
# only 0.1 N*m, so its epsilon, tolerance and C shrink by the range ratio;
# the other targets use them unchanged.
SVR_TARGET_SCALE = {"torque": 0.1 / 6.0}


def scale_for_target(spec: ModelSpec, target: str) -> ModelSpec:
    s = SVR_TARGET_SCALE.get(target, 1.0)
    if spec.kind != "svr" or s == 1.0:
        return spec
    hp = dict(spec.hyperparameters)
    for key in ("C", "epsilon", "tol"):
        hp[key] = hp[key] * s
    return ModelSpec("svr", hp)


def default_grids(target: str | None = None) -> dict[str, list[ModelSpec]]:
    """Search grids per model kind, with SVR settings scaled to ``target``."""
    # C = 1000 at torque scale needs ~10^6 SMO steps per fit and never wins.
    svr_c = [1.0, 10.0, 100.0] if target == "torque" else [1.0, 10.0, 100.0, 1000.0]
    return {
        "linear": [ModelSpec("linear")],
        "decision-tree": expand_grid("decision-tree", {
            "max_depth": [None, 4, 8, 12],
            "min_samples_leaf": [1, 2, 5, 10],
        }),
        "random-forest": expand_grid("random-forest", {
            "bootstrap": [False, True],
            "max_features": _FOREST_FEATURES,
            "n_estimators": [3, 10, 30, 100],
        }),
        "svr": [scale_for_target(spec, target) for spec in expand_grid("svr", {
            "C": svr_c,
            "gamma": [0.01, 0.1, 0.3, 1.0],
        })],
    }


@dataclass
class TargetReport:
    target: str
    reports: dict[str, EvalReport]
    models: dict[str, TrainedModel]
    winner: str

    @property
    def best_model(self) -> TrainedModel:
        return self.models[self.winner]

    @property
    def best_report(self) -> EvalReport:
        return self.reports[self.winner]


def select_models(train: Dataset, test: Dataset, target: str, grids=None, k: int = 5,
                  seed: int = 0) -> TargetReport:
    """Grid-search each kind on ``train``, refit its best spec, and flag the kind
    with the lowest mean CV RMSE as the winner."""
    grids = grids or default_grids(target)
    X, y = train.xy(target)
    reports, models = {}, {}
    for kind in KINDS:
        if kind not in grids:
            continue
        result = grid_search(grids[kind], X, y, k, seed)
        log.info("%s %s: best %s (cv %.4g)", target, kind, result.best.label(), result.best_point.mean)
        model, report = evaluate(result.best, train, test, target, k, seed,
                                 cv_folds=result.best_point.fold_scores)
        report.extra["grid_size"] = len(result.points)
        reports[kind], models[kind] = report, model
    winner = min(reports, key=lambda kind: reports[kind].cv_mean)
    return TargetReport(target, reports, models, winner)
