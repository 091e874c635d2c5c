"""Synthetic optical-fiber finger.

Five fibers cross the finger's contact face. Pressing the face bends the
fibers and changes the light that reaches each photoresistor; the change is
reported as a decibel attenuation per channel. The physical device has no
analytic deformation model, so :class:`FingerPhysicalModel` stands in for it
with smooth per-fiber sensitivity bumps and a mildly superlinear response to
indentation depth.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

N_CHANNELS = 5
N_POSITIONS = 10
FACE_WIDTH_MM = 40.0
MAX_FEED_MM = 10.0
MAX_FORCE_N = 6.0
MAX_TORQUE_NM = 0.05
CENTER_INDEX = (1 + N_POSITIONS) / 2.0  # 5.5

# g(feed) = feed * (1 + FEED_CURVATURE * feed) / (1 + FEED_CURVATURE * MAX_FEED_MM)
FEED_CURVATURE = 0.05


class EnvelopeError(ValueError):
    """A contact lies outside the calibrated sensing envelope."""


@dataclass(frozen=True)
class IntensityPair:
    i0: float
    i: float

    def __post_init__(self):
        if not (self.i0 > 0 and self.i > 0):
            raise ValueError(f"intensities must be positive, got i0={self.i0}, i={self.i}")


@dataclass(frozen=True)
class ChannelReading:
    a: tuple[float, ...]
    timestamp: int = 0

    def __post_init__(self):
        if len(self.a) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} channels, got {len(self.a)}")
        if not all(math.isfinite(v) for v in self.a):
            raise ValueError("non-finite attenuation value")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.a, dtype=float)


@dataclass(frozen=True)
class ContactState:
    """Probe contact on the finger face.

    ``p_index`` and ``v_index`` run over 1..10 (continuous values are allowed
    between grid points); ``feed`` is the indentation depth in mm. ``f_n`` and
    ``t_z`` are the reference wrench and stay ``None`` until filled in by
    :meth:`with_wrench`.
    """

    p_index: float
    feed: float
    v_index: float = CENTER_INDEX
    f_n: float | None = None
    t_z: float | None = None

    def validate(self) -> None:
        if not 1.0 <= self.p_index <= N_POSITIONS:
            raise EnvelopeError(f"p_index {self.p_index} outside [1, {N_POSITIONS}]")
        if not 1.0 <= self.v_index <= N_POSITIONS:
            raise EnvelopeError(f"v_index {self.v_index} outside [1, {N_POSITIONS}]")
        if not 0.0 <= self.feed <= MAX_FEED_MM:
            raise EnvelopeError(f"feed {self.feed} mm outside [0, {MAX_FEED_MM}]")
        if self.f_n is not None and not 0.0 <= self.f_n <= MAX_FORCE_N:
            raise EnvelopeError(f"f_n {self.f_n} N outside [0, {MAX_FORCE_N}]")
        if self.t_z is not None and abs(self.t_z) > MAX_TORQUE_NM:
            raise EnvelopeError(f"t_z {self.t_z} N*m outside +/-{MAX_TORQUE_NM}")

    def with_wrench(self, model: FingerPhysicalModel) -> ContactState:
        f_n, t_z = ground_truth_wrench(model, self)
        return ContactState(self.p_index, self.feed, self.v_index, f_n, t_z)


def index_to_mm(index, extent_mm: float = FACE_WIDTH_MM):
    """Map a 1..10 grid index linearly onto the face, 0 mm at index 1."""
    return (np.asarray(index, dtype=float) - 1.0) / (N_POSITIONS - 1) * extent_mm


def feed_response(feed):
    """Monotone, mildly superlinear deformation measure g(feed) in mm, g(10) = 10."""
    feed = np.asarray(feed, dtype=float)
    return feed * (1.0 + FEED_CURVATURE * feed) / (1.0 + FEED_CURVATURE * MAX_FEED_MM)


def inverse_feed_response(value: float, tol: float = 1e-12) -> float:
    """Solve g(feed) = value for feed in [0, MAX_FEED_MM] by bisection."""
    lo, hi = 0.0, MAX_FEED_MM
    if value < 0 or value > float(feed_response(hi)):
        raise ValueError(f"g(feed) = {value} is unreachable on [0, {MAX_FEED_MM}] mm")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feed_response(mid) < value:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FingerPhysicalModel:
    """Parameters of the synthetic finger.

    Channel ``k`` responds to a contact at horizontal offset ``x`` (mm) and
    normalized height ``u`` in [-1, 1] with sensitivity
    ``amplitude[k] * exp(-(x - center[k])**2 / (2 * width[k]**2)) * (1 + vertical_slope[k] * u)``
    in dB per mm of deformation.
    """

    centers_mm: tuple[float, ...] = (4.0, 12.0, 20.0, 28.0, 36.0)
    widths_mm: tuple[float, ...] = (7.0, 8.0, 9.0, 8.0, 7.5)
    amplitudes_db: tuple[float, ...] = (0.60, 0.52, 0.68, 0.56, 0.64)
    vertical_slopes: tuple[float, ...] = (0.45, 0.25, -0.15, 0.35, -0.40)
    stiffness_gain: float = 0.6  # N per mm of g(feed)
    torque_lever: float = MAX_TORQUE_NM / (MAX_FORCE_N * FACE_WIDTH_MM / 2)  # N*m per N per mm
    noise_sigma: float = 0.02  # dB
    baseline_intensity: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("centers_mm", "widths_mm", "amplitudes_db", "vertical_slopes"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != N_CHANNELS:
                raise ValueError(f"{name} needs {N_CHANNELS} entries")
            object.__setattr__(self, name, values)
        if self.stiffness_gain <= 0:
            raise ValueError("stiffness_gain must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if min(self.widths_mm) <= 0 or min(self.amplitudes_db) <= 0:
            raise ValueError("profile widths and amplitudes must be positive")
        if max(abs(s) for s in self.vertical_slopes) >= 1:
            raise ValueError("vertical slopes must lie in (-1, 1) to keep sensitivities positive")

    def sensitivity(self, p_index, v_index=CENTER_INDEX) -> np.ndarray:
        """Per-channel sensitivity (dB per mm of g) at the given contact, shape (..., 5)."""
        x = index_to_mm(p_index)[..., None]
        u = ((np.asarray(v_index, dtype=float) - CENTER_INDEX) / (CENTER_INDEX - 1.0))[..., None]
        c = np.asarray(self.centers_mm)
        w = np.asarray(self.widths_mm)
        bump = np.asarray(self.amplitudes_db) * np.exp(-((x - c) ** 2) / (2.0 * w**2))
        return bump * (1.0 + np.asarray(self.vertical_slopes) * u)

    def noiseless(self, **changes) -> FingerPhysicalModel:
        return FingerPhysicalModel(**{**asdict(self), "noise_sigma": 0.0, **changes})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> FingerPhysicalModel:
        return cls(**json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> FingerPhysicalModel:
        return cls.from_json(Path(path).read_text())


def attenuation(pair: IntensityPair) -> float:
    """Luminous flux loss ``10*log10(i0 / i)`` in dB."""
    if not (pair.i0 > 0 and pair.i > 0):
        raise ValueError("intensities must be positive")
    return 10.0 * math.log10(pair.i0 / pair.i)


def ground_truth_wrench(model: FingerPhysicalModel, contact: ContactState) -> tuple[float, float]:
    """Reference normal force (N) and Z-torque (N*m) for a contact.

    Torque is negative left of the face centerline and positive right of it.
    """
    contact.validate()
    f_n = min(max(model.stiffness_gain * float(feed_response(contact.feed)), 0.0), MAX_FORCE_N)
    offset_mm = float(index_to_mm(contact.p_index)) - FACE_WIDTH_MM / 2
    t_z = model.torque_lever * f_n * offset_mm
    t_z = min(max(t_z, -MAX_TORQUE_NM), MAX_TORQUE_NM)
    return f_n, t_z


def _noise(model: FingerPhysicalModel, index: int, stream: tuple[int, ...]) -> np.ndarray:
    if model.noise_sigma == 0:
        return np.zeros(N_CHANNELS)
    rng = np.random.default_rng([model.seed, *stream, index])
    return model.noise_sigma * rng.standard_normal(N_CHANNELS)


def sense(
    model: FingerPhysicalModel,
    contact: ContactState,
    index: int = 0,
    stream: tuple[int, ...] = (),
) -> ChannelReading:
    """Five-channel attenuation reading for a contact.

    Noise for sample ``index`` is drawn from a generator seeded by
    ``(model.seed, *stream, index)``, so a reading is a pure function of its
    arguments and independent streams never share state.
    """
    contact.validate()
    gain_db = model.sensitivity(contact.p_index, contact.v_index) * feed_response(contact.feed)
    i0 = model.baseline_intensity
    # Bending couples more light across the cavity, so received intensity rises
    # and the loss reads non-positive.
    values = [attenuation(IntensityPair(i0, i0 * 10.0 ** (g / 10.0))) for g in gain_db]
    a = np.asarray(values) + _noise(model, index, stream)
    return ChannelReading(tuple(float(v) for v in a), timestamp=index)


def sense_batch(
    model: FingerPhysicalModel,
    p_index,
    feed,
    v_index=CENTER_INDEX,
    start_index: int = 0,
    stream: tuple[int, ...] = (),
) -> np.ndarray:
    """Vectorized :func:`sense` over arrays of contacts, shape (n, 5).

    Row ``j`` matches ``sense(model, ContactState(p[j], feed[j], v[j]), start_index + j, stream)``.
    """
    p = np.atleast_1d(np.asarray(p_index, dtype=float))
    f = np.broadcast_to(np.asarray(feed, dtype=float), p.shape)
    v = np.broadcast_to(np.asarray(v_index, dtype=float), p.shape)
    if p.size and (p.min() < 1 or p.max() > N_POSITIONS or v.min() < 1 or v.max() > N_POSITIONS):
        raise EnvelopeError("contact position outside [1, 10]")
    if f.size and (f.min() < 0 or f.max() > MAX_FEED_MM):
        raise EnvelopeError(f"feed outside [0, {MAX_FEED_MM}] mm")
    gain_db = model.sensitivity(p, v) * feed_response(f)[:, None]
    i0 = model.baseline_intensity
    a = 10.0 * np.log10(i0 / (i0 * 10.0 ** (gain_db / 10.0)))
    if model.noise_sigma > 0 and p.size:
        a = a + np.stack([_noise(model, start_index + j, stream) for j in range(p.size)])
    return a.reshape(p.size, N_CHANNELS)
