"""Acceptance criteria 1-10, each reported as one PASS/FAIL line with its runtime budget.

The lines are printed as they happen and gathered again in the terminal
summary under "acceptance criteria".
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from optotactile.calibration.dataset import generate_dataset
from optotactile.calibration.evaluation import (
    ablate_features,
    feature_importance,
    grid_search,
    importance_order,
    rmse,
)
from optotactile.calibration.models import (
    DecisionTreeRegressor,
    EpsilonSVR,
    LinearRegression,
    ModelSpec,
    TrainedModel,
    fit_arrays,
)
from optotactile.calibration.pipeline import default_grids, select_models
from optotactile.cli import main as cli_main
from optotactile.controller import ControllerParams, optimize_grasp
from optotactile.mechanics import (
    ContactWrench,
    GraspScene,
    anti_disturbance,
    coulomb_satisfied,
    decompose_actuator_force,
    equilibrium_residual,
)
from optotactile.sensor import IntensityPair, attenuation
from optotactile.sim import compare_policies, default_objects, resistance_force, GripperConfig


def report(n, title, passed, detail, started, budget_s):
    elapsed = time.perf_counter() - started
    ok = bool(passed) and elapsed <= budget_s
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {title}: {detail} [{elapsed:.2f} s, budget {budget_s} s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert passed, line
    assert elapsed <= budget_s, line


def test_criterion_01_attenuation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    pairs = rng.uniform(1e-3, 1e3, size=(1000, 2))
    worst = max(abs(attenuation(IntensityPair(a, b)) + attenuation(IntensityPair(b, a))) for a, b in pairs)
    zero = attenuation(IntensityPair(1.0, 1.0))
    ten = attenuation(IntensityPair(1.0, 10.0))
    ok = zero == 0.0 and abs(ten + 10.0) <= 1e-12 and worst <= 1e-12
    report(1, "attenuation", ok, f"a(1,1)={zero}, a(1,10)={ten:.12g} dB, antisymmetry error {worst:.1e}", t0, 1)


def test_criterion_02_rmse_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 200))
        p, t = rng.normal(size=n), rng.normal(size=n)
        brute = math.sqrt(sum((a - b) ** 2 for a, b in zip(p, t)) / n)
        worst = max(worst, abs(rmse(p, t) - brute))
    report(2, "rmse oracle", worst <= 1e-12, f"max deviation {worst:.1e} over 100 vectors", t0, 1)


def test_criterion_03_regressors(finger):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 5))
    coef = rng.normal(size=5)
    lin = LinearRegression().fit(X, X @ coef + 0.5)
    coef_err = max(np.abs(lin.coef_ - coef).max(), abs(lin.intercept_ - 0.5))

    quiet = generate_dataset(finger.noiseless(), n_points=400, seed=2)
    tree_worst = 0.0
    for target in ("force", "torque", "position-horizontal"):
        Xq, yq = quiet.xy(target)
        tree = DecisionTreeRegressor().fit(Xq, yq)
        tree_worst = max(tree_worst, rmse(tree.predict(Xq), yq))

    data = generate_dataset(finger, n_points=300, seed=3)
    Xs, ys = data.xy("force")
    svr = EpsilonSVR(C=100.0, gamma=0.3, epsilon=0.01, tol=1e-3).fit(Xs, ys)
    outside = np.ones(len(ys), bool)
    outside[svr.support_] = False
    excess = float(np.max(np.abs(svr.predict(Xs[outside]) - ys[outside]), initial=0.0)) - 0.01
    ok = coef_err <= 1e-9 and tree_worst <= 1e-9 and excess <= 1e-3
    report(3, "regressor correctness", ok,
           f"linear coef error {coef_err:.1e}, tree train rmse {tree_worst:.1e}, "
           f"non-SV residual beyond epsilon {max(excess, 0.0):.1e}", t0, 30)


def test_criterion_04_tree_overfits(main_data):
    t0 = time.perf_counter()
    train = main_data.train()
    X, y = train.xy("force")
    result = grid_search(default_grids("force")["decision-tree"], X, y, 5, 0)
    model = fit_arrays(result.best, X, y, "force", seed=0)
    baseline = rmse(model.predict(X), y)
    cv = result.best_point.mean
    ratio = math.inf if baseline == 0 else cv / baseline
    report(4, "tree overfitting", ratio >= 10,
           f"{result.best.label()} baseline {baseline:.4g} N, CV {cv:.4g} N, ratio {ratio:.3g}", t0, 60)


@pytest.fixture(scope="module")
def calibrated(main_data, vertical_data):
    t0 = time.perf_counter()
    results = {}
    for target in ("force", "torque", "position-horizontal"):
        results[target] = select_models(main_data.train(), main_data.test(), target, seed=0)
    results["position-vertical"] = select_models(vertical_data.train(), vertical_data.test(),
                                                 "position-vertical", seed=0)
    return results, time.perf_counter() - t0


LIMITS = {"force": 0.3, "torque": 0.005, "position-horizontal": 0.75, "position-vertical": 0.5}


def test_criterion_05_calibration_quality(calibrated, main_data):
    results, elapsed = calibrated
    t0 = time.perf_counter() - elapsed
    scores = {t: r.best_report.test for t, r in results.items()}
    X, y = main_data.train().xy("torque")
    Xt, yt = main_data.test().xy("torque")
    nearest = rmse(y[np.argmin(((Xt[:, None] - X[None]) ** 2).sum(-1), axis=1)], yt)
    ok = all(scores[t] < LIMITS[t] for t in LIMITS) and scores["torque"] < nearest
    detail = ", ".join(f"{t} {results[t].winner} {scores[t]:.4g} (< {LIMITS[t]})" for t in LIMITS)
    report(5, "calibration quality", ok, f"{detail}; torque 1-NN oracle {nearest:.4g}", t0, 300)


def test_criterion_06_feature_machinery(calibrated, main_data, vertical_data):
    results, _ = calibrated
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    X = rng.normal(size=(300, 5))
    single = fit_arrays(ModelSpec("random-forest", {"n_estimators": 30}), X, 2.0 * X[:, 1], seed=0)
    lone = feature_importance(single)[1]
    sums, curves = [], []
    for target, result in results.items():
        data = vertical_data if target == "position-vertical" else main_data
        imp = feature_importance(result.models["random-forest"])
        sums.append(abs(imp.sum() - 1.0))
        scores = ablate_features(result.best_report.spec, data.train(), data.test(), target,
                                 importance_order(imp), seed=0)
        curves.append([scores[m] / scores[5] for m in (5, 4, 3, 2, 1)])
    mean_curve = np.mean(curves, axis=0)
    monotone = bool(np.all(np.diff(mean_curve) >= 0))
    ok = max(sums) <= 1e-9 and lone >= 0.95 and monotone
    report(6, "feature machinery", ok,
           f"importance sum error {max(sums):.1e}, lone-feature share {lone:.3f}, "
           f"mean relative ablation rmse 5..1 fibers {np.round(mean_curve, 3).tolist()}", t0, 120)


def test_criterion_07_controller():
    t0 = time.perf_counter()
    params = ControllerParams()
    gain = params.degrees_per_nm
    rng = np.random.default_rng(7)
    failures, converged_runs, unsound = 0, 0, 0
    for gk in np.linspace(0.05, 1.9, 38):
        for _ in range(5):
            targets = rng.uniform(-80, 80, 3)
            k = gk / gain
            theta, trace = optimize_grasp(rng.uniform(-90, 90, 3), lambda t: k * (np.asarray(t) - targets))
            failures += not trace.converged
            if trace.converged:
                converged_runs += 1
                unsound += bool(np.any(np.abs(trace.final_torques()) > params.delta))
    longest = 0
    for gk in (2.2, 3.0, 5.0):
        k = gk / gain
        _, trace = optimize_grasp([0.0, 0.0, 0.0], lambda t: k * (np.asarray(t) - 20.0))
        longest = max(longest, trace.iterations)
    _, trace = optimize_grasp([0.0, 0.0, 0.0], lambda t: np.where(np.asarray(t) < 7.7, -0.01, 0.01))
    longest = max(longest, trace.iterations)
    ok = failures == 0 and unsound == 0 and longest <= params.max_iterations
    report(7, "controller", ok,
           f"{converged_runs} contraction runs converged, {failures} failed, {unsound} unsound fixed points, "
           f"adversarial plants stop within {longest} iterations", t0, 10)


def test_criterion_08_grasp_comparison():
    t0 = time.perf_counter()
    anchor = resistance_force(GripperConfig.from_mode("circular"), default_objects()[0])
    rows = {r.object: r.pct_change for r in compare_policies(default_objects()).rows}
    ok = (abs(anchor - 13.0) < 0.1 and abs(rows["sphere"]) <= 5 and rows["cube"] > 50
          and rows["cuboid"] > 30 and rows["cylinder"] > 30)
    detail = ", ".join(f"{k} {v:+.1f}%" for k, v in rows.items())
    report(8, "conventional vs interactive", ok, f"sphere anchor {anchor:.2f} N; {detail}", t0, 120)


SMALL = {"grids": {"decision-tree": {"max_depth": [None]}, "random-forest": {"n_estimators": [10]},
                   "svr": {"C": [10.0], "gamma": [0.3]}}, "stream": {"ticks": 100}}


def test_criterion_09_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    snapshots = []
    for run in ("a", "b"):
        out = tmp_path / run
        for cmd in ("generate", "train", "evaluate", "ablate", "stream", "grasp", "compare"):
            assert cli_main([cmd, "--config", str(cfg), "--seed", "11", "--out", str(out)]) == 0
        snapshots.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    identical = snapshots[0] == snapshots[1]
    probes = np.random.default_rng(9).normal(size=(1000, 5))
    exact = 0
    for path in sorted((tmp_path / "a/models").glob("*/*.json")):
        model = TrainedModel.load(path)
        exact += np.array_equal(model.predict(probes), TrainedModel.from_json(model.to_json()).predict(probes))
    n_models = len(list((tmp_path / "a/models").glob("*/*.json")))
    report(9, "determinism and persistence", identical and exact == n_models,
           f"{len(snapshots[0])} output files byte-identical across runs, "
           f"{exact}/{n_models} models bit-exact after JSON round trip", t0, 60)


def test_criterion_10_mechanics():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    n = 1000
    flips = lin_err = pyth_err = mono = 0
    for _ in range(n):
        fx, fy, fz, mu = rng.uniform(0, 10), rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(0, 1.5)
        lam = rng.uniform(1e-3, 1e3)
        flips += coulomb_satisfied(ContactWrench(fx, fy, fz, mu=mu)) != coulomb_satisfied(
            ContactWrench(fx * lam, fy * lam, fz * lam, mu=mu))

        contacts = tuple(ContactWrench(*rng.uniform(0, 5, 2), t_z=rng.normal()) for _ in range(3))
        angles = tuple(rng.uniform(-np.pi, np.pi, 3))
        k = rng.uniform(-3, 3)
        f0, t0_ = equilibrium_residual(GraspScene(contacts, angles))
        f1, t1 = equilibrium_residual(GraspScene(
            tuple(ContactWrench(w.f_x * k, w.f_y * k, t_z=w.t_z * k) for w in contacts), angles))
        lin_err = max(lin_err, float(np.abs(f1 - k * f0).max()), abs(t1 - k * t0_))

        f_t, theta = rng.uniform(0.01, 100), rng.uniform(0, math.pi / 2 - 1e-6)
        f_n, f_tan = decompose_actuator_force(f_t, theta)
        pyth_err = max(pyth_err, abs(math.hypot(f_n, f_tan) - f_t) / f_t)

        normals = rng.uniform(0, 10, 3)
        scene = GraspScene(tuple(ContactWrench(x, rng.uniform(0, 2), mu=mu) for x in normals), angles)
        pushed = GraspScene(tuple(ContactWrench(w.f_x + rng.uniform(0, 3), w.f_y, mu=mu) for w in scene.contacts),
                            angles, baseline_tangentials=tuple(w.f_y for w in scene.contacts))
        mono += anti_disturbance(pushed) < anti_disturbance(scene) - 1e-12
    ok = flips == 0 and lin_err <= 1e-9 and pyth_err <= 1e-12 and mono == 0
    report(10, "mechanics properties", ok,
           f"{n} cases each: cone verdict flips {flips}, linearity error {lin_err:.1e}, "
           f"Pythagorean error {pyth_err:.1e}, monotonicity violations {mono}", t0, 10)
