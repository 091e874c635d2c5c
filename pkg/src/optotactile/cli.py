"""Command-line entry point: ``optotactile <command> [--config PATH] [--seed N] [--out DIR]``.

Outputs land under ``--out`` in ``data/``, ``models/`` and ``reports/``.
Every file is written atomically, and files written by a command that then
fails are removed again.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .calibration.dataset import (
    LIVE_STREAM,
    TARGETS,
    Dataset,
    generate_dataset,
    generate_vertical_dataset,
)
from .calibration.evaluation import ablate_features, expand_grid, feature_importance, importance_order, rmse
from .calibration.models import KINDS, ModelSpec, TrainedModel
from .calibration.pipeline import default_grids, scale_for_target, select_models
from .controller import ControllerParams
from .sensor import (
    CENTER_INDEX,
    MAX_FEED_MM,
    N_POSITIONS,
    ContactState,
    FingerPhysicalModel,
    ground_truth_wrench,
    sense_batch,
)
from .sim import ObjectShape, Scene, compare_policies, default_objects

log = logging.getLogger("optotactile")

SEEDED_COMMANDS = {"generate", "train", "evaluate", "ablate", "stream"}

DEFAULT_CONFIG = {
    "seed": None,
    "sensor": {},
    "protocol": {
        "n_points": 1000,
        "positions": 10,
        "max_feed": 10.0,
        "train_fraction": 0.8,
        "vertical_points": 100,
        "constant_force": 3.0,
    },
    "k_folds": 5,
    "grids": None,
    "targets": list(TARGETS),
    "stream": {"ticks": 500},
    "controller": {},
    "gripper": {"mode": "circular"},
    "objects": None,
    "scene": None,
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _apply_set(config: dict, assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def load_config(args) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        try:
            config = _merge(config, json.loads(Path(args.config).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
    for assignment in args.set or []:
        _apply_set(config, assignment)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.command in SEEDED_COMMANDS and config["seed"] is None:
        raise ConfigError(f"'{args.command}' is randomized and needs an explicit --seed (or \"seed\" in the config)")
    return config


def _grids(config: dict, target: str) -> dict:
    grids = default_grids(target)
    for kind, axes in (config.get("grids") or {}).items():
        if kind not in KINDS:
            raise ConfigError(f"unknown model kind {kind!r} in grids")
        specs = expand_grid(kind, axes) if axes else [ModelSpec(kind)]
        grids[kind] = [scale_for_target(spec, target) for spec in specs]
    return grids


def _targets(config: dict, chosen) -> list[str]:
    targets = list(chosen) if chosen else list(config["targets"])
    for t in targets:
        if t not in TARGETS:
            raise ConfigError(f"unknown target {t!r}; expected one of {sorted(TARGETS)}")
    return targets


# ---------------------------------------------------------------- outputs


class Outputs:
    """Atomic writes under one output directory, rolled back if the command fails."""

    def __init__(self, root: Path):
        self.root = root
        self.written: list[Path] = []

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def write(self, rel: str, text: str) -> Path:
        dest = self.path(rel)
        dest.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=f".{dest.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, dest)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(dest)
        return dest

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)
        self.written.clear()


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _f(x) -> str:
    return "" if x is None else format(float(x), ".6g")


def _read_dataset(out: Outputs, name: str) -> Dataset:
    path = out.path("data", f"{name}.csv")
    if not path.exists():
        raise FileNotFoundError(f"dataset {path} not found; run 'generate' first")
    return Dataset.from_csv(path, name=name)


def _dataset_for(out: Outputs, target: str) -> Dataset:
    return _read_dataset(out, "vertical" if target == "position-vertical" else "main")


def _load_model(out: Outputs, rel: str) -> TrainedModel:
    path = out.path("models", rel)
    if not path.exists():
        raise ConfigError(f"model {path} not found; run 'train' first")
    return TrainedModel.load(path)


def _sensor(config: dict) -> FingerPhysicalModel:
    return FingerPhysicalModel(**config["sensor"])


# ---------------------------------------------------------------- commands


def cmd_generate(config: dict, out: Outputs, args) -> None:
    model = _sensor(config)
    proto = config["protocol"]
    seed = int(config["seed"])
    main = generate_dataset(model, proto["n_points"], proto["positions"], proto["max_feed"], seed,
                            proto["train_fraction"])
    vertical = generate_vertical_dataset(model, proto["vertical_points"], proto["positions"],
                                         proto["constant_force"], seed, proto["train_fraction"])
    out.write("data/main.csv", main.to_csv())
    out.write("data/vertical.csv", vertical.to_csv())
    out.write("data/sensor.json", model.to_json() + "\n")
    print(f"wrote {len(main)} main and {len(vertical)} vertical samples to {out.path('data')}")


def _report_table(target: str, result) -> str:
    kinds = list(result.reports)
    width = max(14, *(len(k) + 2 for k in kinds))
    lines = [f"target: {target}", "".join(["RMSE".ljust(10)] + [k.rjust(width) for k in kinds])]
    for label, getter in (("Baseline", lambda r: r.baseline), ("CV", lambda r: r.cv_mean),
                          ("Test", lambda r: r.test)):
        lines.append("".join([label.ljust(10)] + [_f(getter(result.reports[k])).rjust(width) for k in kinds]))
    lines.append(f"winner: {result.winner} ({result.best_report.spec.label()})")
    return "\n".join(lines) + "\n"


def cmd_train(config: dict, out: Outputs, args) -> None:
    seed = int(config["seed"])
    for target in _targets(config, args.target):
        data = _dataset_for(out, target)
        result = select_models(data.train(), data.test(), target, _grids(config, target), config["k_folds"], seed)
        for kind, model in result.models.items():
            out.write(f"models/{target}/{kind}.json", model.to_json() + "\n")
        out.write(f"models/{target}.json", result.best_model.to_json() + "\n")
        rows = [[kind, r.spec.label(), _f(r.baseline), _f(r.cv_mean), _f(r.test), int(kind == result.winner)]
                for kind, r in result.reports.items()]
        out.write(f"reports/train_{target}.csv",
                  _csv(rows, ["model", "spec", "baseline_rmse", "cv_rmse", "test_rmse", "winner"]))
        table = _report_table(target, result)
        out.write(f"reports/train_{target}.txt", table)
        print(table)


def cmd_evaluate(config: dict, out: Outputs, args) -> None:
    rows = []
    for target in _targets(config, args.target):
        data = _dataset_for(out, target)
        model = _load_model(out, f"{target}.json")
        X, y = data.train().xy(target)
        Xt, yt = data.test().xy(target)
        folds = model.metadata.get("fold_scores") or []
        rows.append([target, model.spec.kind, _f(rmse(model.predict(X), y)),
                     _f(np.mean(folds)) if folds else "", _f(rmse(model.predict(Xt), yt))])
    text = _csv(rows, ["target", "model", "baseline_rmse", "cv_rmse", "test_rmse"])
    out.write("reports/evaluation.csv", text)
    print(text, end="")


def cmd_ablate(config: dict, out: Outputs, args) -> None:
    seed = int(config["seed"])
    for target in _targets(config, args.target):
        data = _dataset_for(out, target)
        forest = _load_model(out, f"{target}/random-forest.json")
        spec = _load_model(out, f"{target}.json").spec
        importances = feature_importance(forest)
        order = importance_order(importances)
        scores = ablate_features(spec, data.train(), data.test(), target, order, seed)
        rows = [[m, " ".join(f"a{i + 1}" for i in sorted(order[len(order) - m:])), _f(scores[m])]
                for m in sorted(scores, reverse=True)]
        out.write(f"reports/ablation_{target}.csv", _csv(rows, ["n_fibers", "fibers", "test_rmse"]))
        out.write(f"reports/importance_{target}.csv",
                  _csv([[f"a{i + 1}", _f(v)] for i, v in enumerate(importances)], ["fiber", "importance"]))
        print(f"{target}: " + ", ".join(f"{m} fibers {scores[m]:.4g}" for m in sorted(scores, reverse=True)))


_STREAM_TARGETS = ("force", "torque", "position-horizontal")


def cmd_stream(config: dict, out: Outputs, args) -> None:
    seed = int(config["seed"])
    ticks = int(config["stream"]["ticks"])
    if ticks < 0:
        raise ConfigError("stream.ticks must be non-negative")
    models = {t: _load_model(out, f"{t}.json") for t in _STREAM_TARGETS}
    sensor = _sensor(config)
    rng = np.random.default_rng([seed, LIVE_STREAM])
    p = rng.uniform(1.0, N_POSITIONS, ticks)
    feed = rng.uniform(0.0, MAX_FEED_MM, ticks)
    a = sense_batch(sensor, p, feed, CENTER_INDEX, stream=(seed, LIVE_STREAM)) if ticks else np.zeros((0, 5))
    truth = {"force": np.zeros(ticks), "torque": np.zeros(ticks), "position-horizontal": p}
    for j in range(ticks):
        truth["force"][j], truth["torque"][j] = ground_truth_wrench(sensor, ContactState(p[j], feed[j]))
    pred = {t: (m.predict(a) if ticks else np.zeros(0)) for t, m in models.items()}
    header = ["tick", "feed_mm"]
    for t in _STREAM_TARGETS:
        header += [f"{t}_true", f"{t}_pred"]
    rows = []
    for j in range(ticks):
        row = [j, _f(feed[j])]
        for t in _STREAM_TARGETS:
            row += [_f(truth[t][j]), _f(pred[t][j])]
        rows.append(row)
    out.write("reports/stream.csv", _csv(rows, header))
    summary = [[t, _f(rmse(pred[t], truth[t])) if ticks else ""] for t in _STREAM_TARGETS]
    text = _csv(summary, ["target", "rmse"])
    out.write("reports/stream_summary.csv", text)
    print(text, end="")


def _controller(config: dict) -> ControllerParams:
    c = dict(config["controller"])
    if "max_iter" in c:
        c["max_iterations"] = c.pop("max_iter")
    return ControllerParams(**c)


def cmd_grasp(config: dict, out: Outputs, args) -> None:
    """Both policies on one scene, with the interactive run's controller trace."""
    if config.get("scene"):
        scene = Scene.from_dict(config["scene"])
    else:
        kind = args.object or "cuboid"
        obj = next((o for o in default_objects() if o.kind == kind), None)
        if obj is None:
            raise ConfigError(f"unknown object {kind!r}")
        scene = Scene.from_dict({"object": obj.to_dict(), "gripper": config["gripper"],
                                 "controller": config["controller"]})
    conv, inter = scene.run("conventional"), scene.run("interactive")
    name = scene.object.kind
    rows = []
    for o in (conv, inter):
        for i, c in enumerate(o.contacts):
            w = c.wrench
            rows.append([o.policy, i + 1, _f(o.config.thetas_deg[i]), _f(np.degrees(c.misalignment)),
                         _f(w.f_x), _f(w.f_y), _f(w.t_z), _f(o.resistance)])
    out.write(f"reports/grasp_{name}.csv", _csv(rows, ["policy", "finger", "theta_deg", "misalignment_deg",
                                                        "f_n", "f_t", "t_z", "resistance_n"]))
    out.write(f"reports/grasp_{name}_trace.csv", inter.trace.to_csv())
    out.write(f"reports/grasp_{name}_scene.json", json.dumps(scene.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"{name}: conventional {conv.resistance:.2f} N, interactive {inter.resistance:.2f} N "
          f"({'converged' if inter.converged else 'not converged'} after {inter.iterations} iterations)")


def cmd_compare(config: dict, out: Outputs, args) -> None:
    objects = ([ObjectShape.from_dict(o) for o in config["objects"]] if config.get("objects")
               else default_objects())
    g = dict(config["gripper"])
    scene = Scene.from_dict({"object": objects[0].to_dict(), "gripper": g, "controller": config["controller"]})
    report = compare_policies(objects, scene.controller, scene.gripper)
    out.write("reports/compare.csv", report.to_csv())
    out.write("reports/compare.txt", report.to_table())
    if args.svg:
        out.write("reports/compare.svg", report.to_svg())
    print(report.to_table(), end="")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "stream": cmd_stream,
    "grasp": cmd_grasp,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for every randomized step")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, dotted keys, JSON values")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="optotactile", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "stream"):
        sub.add_parser(name, parents=[common])
    for name in ("train", "evaluate", "ablate"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--target", action="append", choices=sorted(TARGETS))
    p = sub.add_parser("grasp", parents=[common])
    p.add_argument("--object", choices=[o.kind for o in default_objects()])
    p = sub.add_parser("compare", parents=[common])
    p.add_argument("--svg", action="store_true", help="also write a bar chart")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs(Path(args.out))
    try:
        config = load_config(args)
        COMMANDS[args.command](config, out, args)
    except (ValueError, OSError, RuntimeError, KeyError, TypeError) as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.rollback()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
