"""Quasi-static contact mechanics for a three-finger planar grasp.

Conventions: each contact is described in its own finger frame, with ``f_x``
the normal push into the object, ``f_y`` the in-plane tangential component
and ``f_z`` the out-of-plane (vertical) tangential component. ``t_z`` is the
twist about the contact normal's vertical axis. ``t_y`` is carried for
completeness but, like the object's weight, never enters a balance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ContactWrench:
    f_x: float
    f_y: float = 0.0
    f_z: float = 0.0
    t_z: float = 0.0
    t_y: float = 0.0
    mu: float = 0.6
    v: float = 0.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")
        if self.v < 0:
            raise ValueError("sliding speed must be non-negative")

    @property
    def tangential(self) -> float:
        return math.hypot(self.f_y, self.f_z)


@dataclass(frozen=True)
class ContactPatch:
    """Discretized contact forces, each a (normal, tangential-y, tangential-z) triple."""

    forces: tuple[tuple[float, float, float], ...]
    resultant: ContactWrench

    @classmethod
    def from_forces(cls, forces, mu: float = 0.6, t_z: float = 0.0) -> ContactPatch:
        forces = tuple(tuple(float(c) for c in f) for f in forces)
        total = np.sum(np.asarray(forces, dtype=float).reshape(-1, 3), axis=0)
        return cls(forces, ContactWrench(float(total[0]), float(total[1]), float(total[2]), t_z, mu=mu))

    def is_consistent(self, rtol: float = 1e-12) -> bool:
        total = np.sum(np.asarray(self.forces, dtype=float).reshape(-1, 3), axis=0)
        r = np.array([self.resultant.f_x, self.resultant.f_y, self.resultant.f_z])
        return bool(np.all(np.abs(total - r) <= rtol * np.maximum(1.0, np.abs(r))))


@dataclass(frozen=True)
class GraspScene:
    """Three contacts plus an external load.

    ``normal_angles`` gives, per finger, the world-frame direction (rad) of the
    force the finger pushes into the object; the in-plane tangential ``f_y``
    acts along that direction rotated by +90 degrees.
    """

    contacts: tuple[ContactWrench, ...]
    normal_angles: tuple[float, ...]
    f_ext: tuple[float, float] = (0.0, 0.0)
    t_ext: float = 0.0
    f_t: float = 1.0
    baseline_tangentials: tuple[float, ...] | None = None
    baseline_normals: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.contacts) != 3 or len(self.normal_angles) != 3:
            raise ValueError("a grasp scene has exactly three contacts")
        if not self.f_t > 0:
            raise ValueError("actuator force must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> GraspScene:
        doc = dict(doc)
        doc["contacts"] = tuple(ContactWrench(**c) for c in doc["contacts"])
        for key in ("normal_angles", "f_ext", "baseline_tangentials", "baseline_normals"):
            if doc.get(key) is not None:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> GraspScene:
        return cls.from_dict(json.loads(Path(path).read_text()))


def coulomb_satisfied(w: ContactWrench) -> bool:
    """Sticking contact inside its friction cone: ``|(f_y, f_z)| <= mu * f_x`` with ``v == 0``."""
    if w.v > 0:
        return False
    return w.tangential <= w.mu * w.f_x


def equilibrium_residual(scene: GraspScene) -> tuple[np.ndarray, float]:
    """Net in-plane force (2-vector) and net Z-torque on the object."""
    force = np.asarray(scene.f_ext, dtype=float).copy()
    torque = float(scene.t_ext)
    for w, phi in zip(scene.contacts, scene.normal_angles):
        n = np.array([math.cos(phi), math.sin(phi)])
        t = np.array([-n[1], n[0]])
        force += w.f_x * n + w.f_y * t
        torque += w.t_z
    return force, torque


def anti_disturbance(scene: GraspScene) -> float:
    """Smallest external force that breaks the grasp: ``sum(mu*F_n) - sum(|F_t0|)``.

    Baseline tangentials default to each contact's current tangential
    magnitude.
    """
    normals = [w.f_x for w in scene.contacts]
    if any(f < 0 for f in normals):
        raise ValueError("normal forces must be non-negative")
    if scene.baseline_tangentials is not None:
        baseline = [abs(t) for t in scene.baseline_tangentials]
    else:
        baseline = [w.tangential for w in scene.contacts]
    return sum(w.mu * w.f_x for w in scene.contacts) - sum(baseline)


def decompose_actuator_force(f_t: float, theta: float) -> tuple[float, float]:
    """Split actuator force ``f_t`` at misalignment ``theta`` (rad, [0, pi/2))
    into normal ``f_t*cos(theta)`` and tangential ``f_t*sin(theta)``."""
    if not f_t > 0:
        raise ValueError("actuator force must be positive")
    if not 0.0 <= theta < math.pi / 2:
        raise ValueError(f"misalignment {theta} rad outside [0, pi/2)")
    return f_t * math.cos(theta), f_t * math.sin(theta)


def vertical_capacity(w: ContactWrench) -> float:
    """Largest vertical friction a contact can add while its in-plane load stays fixed."""
    slack = (w.mu * w.f_x) ** 2 - w.f_y**2
    return math.sqrt(slack) if slack > 0 and w.f_x > 0 else 0.0


def pull_is_feasible(contacts, pull: float) -> bool:
    """Whether vertical friction shares exist that balance ``pull`` inside every cone."""
    return sum(vertical_capacity(w) for w in contacts) >= pull


def max_vertical_pull(contacts, tol: float = 1e-10) -> float:
    """Bisection for the largest vertical pull the contacts hold without slipping."""
    contacts = list(contacts)
    lo, hi = 0.0, sum(w.mu * max(w.f_x, 0.0) for w in contacts)
    if hi <= 0:
        return 0.0
    if pull_is_feasible(contacts, hi):
        return hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if pull_is_feasible(contacts, mid):
            lo = mid
        else:
            hi = mid
    return lo
