"""Torque-driven finger reorientation.

Each finger's base joint is turned against its sensed twist torque,
``theta <- theta - gamma * t_z``, until ``|t_z|`` falls below a threshold.
``gamma`` is expressed in actuator ticks per N*m and converted to degrees
with ``ticks_per_degree``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

N_FINGERS = 3
DEFAULT_TICKS_PER_DEGREE = 1.0 / 0.088


class ControllerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ControllerParams:
    gamma: float = 10000.0
    delta: float = 0.002
    max_iterations: int = 500
    ticks_per_degree: float = DEFAULT_TICKS_PER_DEGREE
    joint_limit_deg: float = 90.0
    schedule: str = "synchronous"
    stall_window: int = 10

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.ticks_per_degree > 0:
            raise ValueError("ticks_per_degree must be positive")
        if self.schedule not in ("synchronous", "asynchronous"):
            raise ValueError("schedule must be 'synchronous' or 'asynchronous'")
        if self.stall_window < 1:
            raise ValueError("stall_window must be at least 1")

    @property
    def degrees_per_nm(self) -> float:
        return self.gamma / self.ticks_per_degree


@dataclass(frozen=True)
class FingerState:
    finger: int
    theta: float
    t_z: float = math.nan


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    finger: int
    theta: float
    t_z: float
    saturated: bool = False


@dataclass
class OptimizationTrace:
    records: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    gamma_halvings: list[tuple[int, int]] = field(default_factory=list)  # (iteration, finger)

    def finger(self, finger_id: int) -> list[TraceRecord]:
        return [r for r in self.records if r.finger == finger_id]

    def final_torques(self) -> np.ndarray:
        last = {}
        for r in self.records:
            last[r.finger] = r.t_z
        return np.array([last[k] for k in sorted(last)])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "finger", "theta_deg", "t_z_nm", "saturated"])
        for r in sorted(self.records, key=lambda r: (r.iteration, r.finger)):
            w.writerow([r.iteration, r.finger, format(r.theta, ".9g"), format(r.t_z, ".9g"), int(r.saturated)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


TorqueOracle = Callable[[np.ndarray], Sequence[float]]


def _query(oracle: TorqueOracle, theta: np.ndarray) -> np.ndarray:
    t = np.asarray(oracle(theta.copy()), dtype=float).reshape(-1)
    if t.shape != theta.shape:
        raise ControllerError(f"torque oracle returned {t.shape[0]} values for {theta.shape[0]} fingers")
    if not np.all(np.isfinite(t)):
        raise ControllerError(f"torque oracle returned non-finite torque {t.tolist()}")
    return t


class _FingerLoop:
    """Step-size bookkeeping for one finger: halve gamma after a stall."""

    def __init__(self, params: ControllerParams, t0: float):
        self.params = params
        self.scale = 1.0
        self.best = abs(t0)
        self.stall = 0

    def step(self, theta: float, t_z: float) -> tuple[float, bool]:
        p = self.params
        new = theta - self.scale * p.degrees_per_nm * t_z
        lim = p.joint_limit_deg
        clamped = min(max(new, -lim), lim)
        return clamped, clamped != new

    def observe(self, t_z: float) -> bool:
        """Track progress; returns True when the step size was just halved."""
        if abs(t_z) < self.best:
            self.best = abs(t_z)
            self.stall = 0
            return False
        self.stall += 1
        if self.stall >= self.params.stall_window:
            self.scale *= 0.5
            self.stall = 0
            self.best = abs(t_z)
            return True
        return False


def optimize_grasp(initial, torque_oracle: TorqueOracle, params: ControllerParams | None = None):
    """Reorient fingers until every sensed ``|t_z|`` is at most ``params.delta``.

    ``initial`` is a sequence of :class:`FingerState` (or plain angles in
    degrees). ``torque_oracle`` maps the full angle vector to per-finger
    torques and is queried once per control tick. Returns the final angles
    and the :class:`OptimizationTrace`.
    """
    params = params or ControllerParams()
    theta = np.array([s.theta if isinstance(s, FingerState) else float(s) for s in initial], dtype=float)
    ids = [s.finger if isinstance(s, FingerState) else i + 1 for i, s in enumerate(initial)]
    lim = params.joint_limit_deg
    if np.any(np.abs(theta) > lim):
        raise ValueError(f"initial configuration outside joint limits +/-{lim} deg")
    trace = OptimizationTrace()
    t = _query(torque_oracle, theta)
    for k in range(len(theta)):
        trace.records.append(TraceRecord(0, ids[k], float(theta[k]), float(t[k])))
    loops = [_FingerLoop(params, t[k]) for k in range(len(theta))]

    if params.schedule == "synchronous":
        it = 0
        while it < params.max_iterations:
            active = np.abs(t) > params.delta
            if not active.any():
                break
            it += 1
            saturated = np.zeros(len(theta), dtype=bool)
            for k in np.flatnonzero(active):
                theta[k], saturated[k] = loops[k].step(theta[k], t[k])
            t = _query(torque_oracle, theta)
            for k in range(len(theta)):
                trace.records.append(TraceRecord(it, ids[k], float(theta[k]), float(t[k]), bool(saturated[k])))
                if active[k] and loops[k].observe(t[k]):
                    trace.gamma_halvings.append((it, ids[k]))
        trace.iterations = it
    else:
        it = 0
        for k in range(len(theta)):
            n_steps = 0
            while abs(t[k]) > params.delta and n_steps < params.max_iterations:
                n_steps += 1
                it += 1
                theta[k], sat = loops[k].step(theta[k], t[k])
                t = _query(torque_oracle, theta)
                trace.records.append(TraceRecord(it, ids[k], float(theta[k]), float(t[k]), sat))
                if loops[k].observe(t[k]):
                    trace.gamma_halvings.append((it, ids[k]))
        t = _query(torque_oracle, theta)
        trace.iterations = it

    trace.converged = bool(np.all(np.abs(t) <= params.delta))
    return theta, trace
