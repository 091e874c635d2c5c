"""Planar simulation of a three-finger reconfigurable gripper.

Each finger is mounted on a circle around the palm center and presses along
its inward radial direction rotated by its base angle ``theta``. The contact
is where that pressing line enters the object's convex cross-section. The
finger pushes with a constant actuator force, split into normal and
tangential parts by the misalignment between the pressing direction and the
inward surface normal. A soft finger twisted against a surface also reports
a Z-torque proportional to that misalignment, which is what the
reorientation controller drives to zero.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .controller import ControllerParams, OptimizationTrace, optimize_grasp
from .mechanics import ContactWrench, decompose_actuator_force, max_vertical_pull

DEFAULT_MU = 0.6
SPHERE_ANCHOR_N = 13.0
DEFAULT_F_T = SPHERE_ANCHOR_N / (3 * DEFAULT_MU)  # three aligned fingers hold 13 N
DEFAULT_K_TWIST = 0.01  # N*m per (rad * N)
DEFAULT_MOUNT_RADIUS_MM = 30.0

MODES = {
    # base angles (deg) on the mounting circle, initial finger rotations (deg)
    "circular": ((90.0, 210.0, 330.0), (0.0, 0.0, 0.0)),
    "parallel": ((60.0, 120.0, 270.0), (30.0, -30.0, 0.0)),
    "lateral": ((0.0, 180.0, 90.0), (0.0, 0.0, 0.0)),
}
OBJECT_KINDS = ("sphere", "cube", "cuboid", "cylinder")


class ContactMissError(RuntimeError):
    """A finger's pressing line does not reach the object."""


def _rot(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ObjectShape:
    """Convex planar cross-section: a circle (``dims = (r,)``) for spheres,
    a ``w x h`` rectangle (``dims = (w, h)``) for everything else."""

    kind: str
    dims: tuple[float, ...]
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)  # x mm, y mm, rotation deg
    mu: float = DEFAULT_MU

    def __post_init__(self):
        if self.kind not in OBJECT_KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}; expected one of {OBJECT_KINDS}")
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != (1 if self.is_circle else 2):
            raise ValueError(f"{self.kind} needs {'1 dimension' if self.is_circle else '2 dimensions'}")
        if min(dims) <= 0:
            raise ValueError("object dimensions must be positive")
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "pose", tuple(float(v) for v in self.pose))

    @property
    def is_circle(self) -> bool:
        return self.kind == "sphere"

    def transformed(self, rotation_deg: float = 0.0, mirror: bool = False) -> ObjectShape:
        """Pose after an optional reflection across the x-axis, then a rotation about the origin."""
        x, y, r = self.pose
        if mirror:
            y, r = -y, -r
        p = _rot(rotation_deg) @ np.array([x, y])
        return replace(self, pose=(float(p[0]), float(p[1]), r + rotation_deg))

    def entry(self, base: np.ndarray, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
        """First point where the line ``base + t*direction`` enters the shape,
        with the outward normal there; ``None`` when the line misses."""
        x, y, r = self.pose
        R = _rot(r)
        b = R.T @ (base - np.array([x, y]))
        d = R.T @ direction
        if self.is_circle:
            rad = self.dims[0]
            bd = float(b @ d)
            disc = bd * bd - (float(b @ b) - rad * rad)
            if disc <= 0:
                return None
            p = b + (-bd - math.sqrt(disc)) * d
            n = p / rad
        else:
            half = np.array(self.dims) / 2.0
            t_in, t_out, axis = -math.inf, math.inf, -1
            for k in range(2):
                if abs(d[k]) < 1e-15:
                    if abs(b[k]) >= half[k]:
                        return None
                    continue
                t1, t2 = sorted(((-half[k] - b[k]) / d[k], (half[k] - b[k]) / d[k]))
                if t1 > t_in:
                    t_in, axis = t1, k
                t_out = min(t_out, t2)
            if t_in >= t_out:
                return None
            p = b + t_in * d
            n = np.zeros(2)
            n[axis] = -math.copysign(1.0, d[axis])
        return R @ p + np.array([x, y]), R @ n

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dims": list(self.dims), "pose": list(self.pose), "mu": self.mu}

    @classmethod
    def from_dict(cls, doc: dict) -> ObjectShape:
        return cls(doc["kind"], tuple(doc["dims"]), tuple(doc.get("pose", (0.0, 0.0, 0.0))),
                   doc.get("mu", DEFAULT_MU))


def default_objects(mu: float = DEFAULT_MU) -> list[ObjectShape]:
    """The four test objects; the cylinder lies on its side, showing a rectangle."""
    return [
        ObjectShape("sphere", (30.0,), mu=mu),
        ObjectShape("cube", (50.0, 50.0), mu=mu),
        ObjectShape("cuboid", (80.0, 50.0), mu=mu),
        ObjectShape("cylinder", (100.0, 60.0), mu=mu),
    ]


@dataclass(frozen=True)
class GripperConfig:
    mode: str
    base_angles_deg: tuple[float, float, float]
    thetas_deg: tuple[float, float, float]
    f_t: float = DEFAULT_F_T
    radius_mm: float = DEFAULT_MOUNT_RADIUS_MM
    k_twist: float = DEFAULT_K_TWIST

    def __post_init__(self):
        if len(self.base_angles_deg) != 3 or len(self.thetas_deg) != 3:
            raise ValueError("a gripper has exactly three fingers")
        if not self.f_t > 0:
            raise ValueError("actuator force must be positive")
        if not self.radius_mm > 0:
            raise ValueError("mounting radius must be positive")
        object.__setattr__(self, "base_angles_deg", tuple(float(a) for a in self.base_angles_deg))
        object.__setattr__(self, "thetas_deg", tuple(float(a) for a in self.thetas_deg))

    @classmethod
    def from_mode(cls, mode: str = "circular", f_t: float = DEFAULT_F_T, **kwargs) -> GripperConfig:
        if mode not in MODES:
            raise ValueError(f"unknown gripper mode {mode!r}; expected one of {sorted(MODES)}")
        bases, thetas = MODES[mode]
        return cls(mode, bases, thetas, f_t, **kwargs)

    def with_thetas(self, thetas) -> GripperConfig:
        return replace(self, thetas_deg=tuple(float(t) for t in thetas))

    def transformed(self, rotation_deg: float = 0.0, mirror: bool = False) -> GripperConfig:
        bases = np.array(self.base_angles_deg)
        thetas = np.array(self.thetas_deg)
        if mirror:
            bases, thetas = -bases, -thetas
        return replace(self, base_angles_deg=tuple(bases + rotation_deg), thetas_deg=tuple(thetas))

    def finger_rays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        rays = []
        for alpha, theta in zip(self.base_angles_deg, self.thetas_deg):
            a = math.radians(alpha)
            base = self.radius_mm * np.array([math.cos(a), math.sin(a)])
            press = math.radians(alpha + 180.0 + theta)
            rays.append((base, np.array([math.cos(press), math.sin(press)])))
        return rays


@dataclass(frozen=True)
class Contact:
    point: tuple[float, float]
    misalignment: float  # rad, positive when the pressing direction is counter-clockwise of the inward normal
    wrench: ContactWrench


def contact_solve(config: GripperConfig, obj: ObjectShape) -> list[Contact]:
    """Quasi-static single-point contact for each finger."""
    contacts = []
    for i, (base, d) in enumerate(config.finger_rays()):
        hit = obj.entry(base, d)
        if hit is None:
            raise ContactMissError(f"finger {i + 1} misses the {obj.kind}")
        point, n_out = hit
        n_in = -n_out
        mis = math.atan2(n_in[0] * d[1] - n_in[1] * d[0], float(n_in @ d))
        if abs(mis) >= math.pi / 2:
            raise ContactMissError(f"finger {i + 1} meets the {obj.kind} edge-on")
        f_n, f_t = decompose_actuator_force(config.f_t, abs(mis))
        wrench = ContactWrench(f_x=f_n, f_y=math.copysign(f_t, mis), t_z=config.k_twist * mis * f_n, mu=obj.mu)
        contacts.append(Contact((float(point[0]), float(point[1])), mis, wrench))
    return contacts


def resistance_force(config: GripperConfig, obj: ObjectShape) -> float:
    """Largest vertical pull the grasp withstands before a friction cone is violated."""
    return max_vertical_pull([c.wrench for c in contact_solve(config, obj)])


def torque_oracle(config: GripperConfig, obj: ObjectShape):
    """Map finger rotations (deg) to the Z-torques each finger would sense."""
    def oracle(thetas):
        return [c.wrench.t_z for c in contact_solve(config.with_thetas(thetas), obj)]
    return oracle


@dataclass
class GraspOutcome:
    policy: str
    object: ObjectShape
    config: GripperConfig
    contacts: list[Contact]
    resistance: float
    converged: bool
    trace: OptimizationTrace | None = None

    @property
    def iterations(self) -> int:
        return self.trace.iterations if self.trace is not None else 0


POLICIES = ("conventional", "interactive")


def run_policy(policy: str, obj: ObjectShape, params: ControllerParams | None = None,
               gripper: GripperConfig | None = None) -> GraspOutcome:
    """Close the gripper (circular by default) and measure; the interactive
    policy first reorients the fingers until their sensed torques vanish."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    config = gripper or GripperConfig.from_mode("circular")
    trace = None
    converged = True
    if policy == "interactive":
        thetas, trace = optimize_grasp(list(config.thetas_deg), torque_oracle(config, obj), params)
        config = config.with_thetas(thetas)
        converged = trace.converged
    contacts = contact_solve(config, obj)
    resistance = max_vertical_pull([c.wrench for c in contacts])
    return GraspOutcome(policy, obj, config, contacts, resistance, converged, trace)


def percent_change(before: float, after: float) -> float:
    if before == 0:
        return 0.0 if after == 0 else math.copysign(math.inf, after)
    return (after - before) / before * 100.0


@dataclass
class ComparisonRow:
    object: str
    conventional: float
    interactive: float
    iterations: int

    @property
    def pct_change(self) -> float:
        return percent_change(self.conventional, self.interactive)


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["object", "policy", "resistance_n", "pct_change", "iterations"])
        for r in self.rows:
            w.writerow([r.object, "conventional", f"{r.conventional:.6f}", "", 0])
            w.writerow([r.object, "interactive", f"{r.interactive:.6f}", f"{r.pct_change:.2f}", r.iterations])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"{'object':<10} {'conventional N':>15} {'interactive N':>14} {'change':>9} {'iters':>6}"]
        for r in self.rows:
            lines.append(f"{r.object:<10} {r.conventional:>15.2f} {r.interactive:>14.2f} "
                         f"{r.pct_change:>+8.1f}% {r.iterations:>6d}")
        return "\n".join(lines) + "\n"

    def to_svg(self, width: int = 560, height: int = 300) -> str:
        """Grouped bar chart, conventional (grey) beside interactive (blue) per object."""
        top = max([max(r.conventional, r.interactive) for r in self.rows] + [1e-9])
        margin, base_y = 40, height - 40
        group = (width - 2 * margin) / max(len(self.rows), 1)
        bar = group / 3
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
                 f'font-family="sans-serif" font-size="12">',
                 f'<line x1="{margin}" y1="{base_y}" x2="{width - margin}" y2="{base_y}" stroke="black"/>']
        for i, r in enumerate(self.rows):
            x0 = margin + i * group + bar / 2
            for j, (value, colour) in enumerate(((r.conventional, "#999999"), (r.interactive, "#3366cc"))):
                h = (base_y - margin) * value / top
                x = x0 + j * bar
                parts.append(f'<rect x="{x:.1f}" y="{base_y - h:.1f}" width="{bar:.1f}" height="{h:.1f}" '
                             f'fill="{colour}"/>')
                parts.append(f'<text x="{x + bar / 2:.1f}" y="{base_y - h - 4:.1f}" '
                             f'text-anchor="middle">{value:.1f}</text>')
            parts.append(f'<text x="{x0 + bar:.1f}" y="{base_y + 16}" text-anchor="middle">{r.object}</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def compare_policies(objects, params: ControllerParams | None = None,
                     gripper: GripperConfig | None = None) -> ComparisonReport:
    objects = list(objects)
    if not objects:
        raise ValueError("need at least one object")
    report = ComparisonReport()
    for obj in objects:
        conv = run_policy("conventional", obj, params, gripper)
        inter = run_policy("interactive", obj, params, gripper)
        report.rows.append(ComparisonRow(obj.kind, conv.resistance, inter.resistance, inter.iterations))
    return report


@dataclass
class Scene:
    """One object, a gripper and controller settings, as stored in scene JSON."""

    object: ObjectShape
    gripper: GripperConfig = field(default_factory=GripperConfig.from_mode)
    controller: ControllerParams = field(default_factory=ControllerParams)

    def to_dict(self) -> dict:
        return {
            "object": self.object.to_dict(),
            "gripper": {"mode": self.gripper.mode, "F_T": self.gripper.f_t,
                        "radius_mm": self.gripper.radius_mm, "k_twist": self.gripper.k_twist},
            "controller": {"gamma": self.controller.gamma, "delta": self.controller.delta,
                           "max_iter": self.controller.max_iterations},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Scene:
        g = dict(doc.get("gripper", {}))
        gripper = GripperConfig.from_mode(
            g.pop("mode", "circular"), g.pop("F_T", DEFAULT_F_T),
            **{k: g[k] for k in ("radius_mm", "k_twist") if k in g})
        c = dict(doc.get("controller", {}))
        if "max_iter" in c:
            c["max_iterations"] = c.pop("max_iter")
        return cls(ObjectShape.from_dict(doc["object"]), gripper, ControllerParams(**c))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> Scene:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def run(self, policy: str) -> GraspOutcome:
        return run_policy(policy, self.object, self.controller, self.gripper)

