"""Calibration datasets: indentation sweeps over the synthetic finger and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..sensor import (
    CENTER_INDEX,
    MAX_FEED_MM,
    MAX_FORCE_N,
    N_CHANNELS,
    N_POSITIONS,
    FingerPhysicalModel,
    ContactState,
    ground_truth_wrench,
    inverse_feed_response,
    sense_batch,
)

CSV_HEADER = ["p_index", "v_index", "m_index", "a1", "a2", "a3", "a4", "a5", "f_n", "t_z", "split"]

TARGETS = {
    "force": "f_n",
    "torque": "t_z",
    "position-horizontal": "p_index",
    "position-vertical": "v_index",
}

# Noise stream tags so the main, vertical and streaming sweeps never reuse draws.
MAIN_STREAM, VERTICAL_STREAM, LIVE_STREAM = 0, 1, 2


class ProtocolError(ValueError):
    """A data-collection protocol cannot be carried out on the finger."""


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationSample:
    p_index: float
    m_index: float
    a: tuple[float, ...]
    f_n: float
    t_z: float
    v_index: float | None = None
    split: str = "train"


@dataclass
class Dataset:
    """Column-oriented calibration data.

    ``v_index`` is NaN for rows of the horizontal sweep, where the vertical
    contact height is held fixed and not recorded.
    """

    p_index: np.ndarray
    v_index: np.ndarray
    m_index: np.ndarray
    a: np.ndarray
    f_n: np.ndarray
    t_z: np.ndarray
    split: np.ndarray
    seed: int | None = None
    name: str = "main"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.p_index)
        self.a = np.asarray(self.a, dtype=float).reshape(n, N_CHANNELS)
        for col in ("p_index", "v_index", "m_index", "f_n", "t_z"):
            setattr(self, col, np.asarray(getattr(self, col), dtype=float).reshape(n))
        self.split = np.asarray(self.split, dtype="<U5").reshape(n)

    def __len__(self) -> int:
        return len(self.p_index)

    def __iter__(self):
        for j in range(len(self)):
            v = self.v_index[j]
            yield CalibrationSample(
                float(self.p_index[j]),
                float(self.m_index[j]),
                tuple(float(x) for x in self.a[j]),
                float(self.f_n[j]),
                float(self.t_z[j]),
                None if math.isnan(v) else float(v),
                str(self.split[j]),
            )

    @classmethod
    def from_arrays(cls, a, y=None, *, target: str = "force", split=None, **columns) -> Dataset:
        """Build a dataset from a feature matrix, mainly for tests and ad-hoc fits."""
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        cols = {c: np.zeros(n) for c in ("p_index", "m_index", "f_n", "t_z")}
        cols["v_index"] = np.full(n, np.nan)
        cols.update({k: np.asarray(v, dtype=float) for k, v in columns.items()})
        if y is not None:
            cols[TARGETS[target]] = np.asarray(y, dtype=float)
        if split is None:
            split = np.full(n, "train")
        return cls(a=a, split=split, **cols)

    def subset(self, mask) -> Dataset:
        mask = np.asarray(mask)
        return Dataset(
            self.p_index[mask], self.v_index[mask], self.m_index[mask], self.a[mask],
            self.f_n[mask], self.t_z[mask], self.split[mask], self.seed, self.name, dict(self.meta),
        )

    def train(self) -> Dataset:
        return self.subset(self.split == "train")

    def test(self) -> Dataset:
        return self.subset(self.split == "test")

    def target(self, name: str) -> np.ndarray:
        try:
            column = TARGETS[name]
        except KeyError:
            raise ValueError(f"unknown target {name!r}; expected one of {sorted(TARGETS)}") from None
        y = getattr(self, column)
        if len(y) and np.isnan(y).any():
            raise ValueError(f"target {name!r} is not recorded in dataset {self.name!r}")
        return y

    def xy(self, target: str) -> tuple[np.ndarray, np.ndarray]:
        return self.a, self.target(target)

    # --- CSV -------------------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for j in range(len(self)):
            v = self.v_index[j]
            writer.writerow(
                [_fmt(self.p_index[j]), "" if math.isnan(v) else _fmt(v), _fmt(self.m_index[j])]
                + [_fmt(x) for x in self.a[j]]
                + [_fmt(self.f_n[j]), _fmt(self.t_z[j]), self.split[j]]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, name: str | None = None) -> Dataset:
        path = Path(path)
        return cls.parse_csv(path.read_text(), name=name or path.stem, source=str(path))

    @classmethod
    def parse_csv(cls, text: str, name: str = "main", source: str = "<csv>") -> Dataset:
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{source}: empty file") from None
        if header != CSV_HEADER:
            raise DatasetFormatError(f"{source}:1: expected header {','.join(CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DatasetFormatError(
                    f"{source}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}"
                )
            try:
                values = [float(row[0]), float(row[1]) if row[1] != "" else math.nan]
                values += [float(x) for x in row[2:10]]
            except ValueError as exc:
                raise DatasetFormatError(f"{source}:{lineno}: {exc}") from None
            if not all(math.isfinite(x) for i, x in enumerate(values) if i != 1):
                raise DatasetFormatError(f"{source}:{lineno}: non-finite value")
            if row[10] not in ("train", "test"):
                raise DatasetFormatError(f"{source}:{lineno}: split must be train or test, got {row[10]!r}")
            rows.append(values + [row[10]])
        if not rows:
            return cls.from_arrays(np.zeros((0, N_CHANNELS)))
        cols = list(zip(*rows))
        return cls(
            p_index=np.array(cols[0]), v_index=np.array(cols[1]), m_index=np.array(cols[2]),
            a=np.column_stack(cols[3:8]), f_n=np.array(cols[8]), t_z=np.array(cols[9]),
            split=np.array(cols[10]), name=name,
        )


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _split_labels(n: int, n_train: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.full(n, "test", dtype="<U5")
    labels[rng.permutation(n)[:n_train]] = "train"
    return labels


def generate_dataset(
    model: FingerPhysicalModel,
    n_points: int = 1000,
    positions: int = N_POSITIONS,
    max_feed: float = MAX_FEED_MM,
    seed: int = 0,
    train_fraction: float = 0.8,
) -> Dataset:
    """Horizontal indentation sweep: random grid position, random feed in [0, max_feed]."""
    if n_points < 0 or positions < 1 or max_feed < 0:
        raise ProtocolError("protocol counts must be non-negative and positions >= 1")
    if positions > N_POSITIONS or max_feed > MAX_FEED_MM:
        raise ProtocolError(f"protocol exceeds the {N_POSITIONS}-position, {MAX_FEED_MM} mm envelope")
    rng = np.random.default_rng(seed)
    grid = np.linspace(1.0, N_POSITIONS, positions) if positions > 1 else np.array([CENTER_INDEX])
    p = grid[rng.integers(0, positions, size=n_points)]
    feed = rng.uniform(0.0, max_feed, size=n_points)
    split = _split_labels(n_points, int(round(train_fraction * n_points)), rng)
    a = sense_batch(model, p, feed, CENTER_INDEX, stream=(seed, MAIN_STREAM))
    f_n, t_z = _wrenches(model, p, feed, np.full(n_points, CENTER_INDEX))
    return Dataset(
        p_index=p, v_index=np.full(n_points, np.nan), m_index=feed, a=a, f_n=f_n, t_z=t_z,
        split=split, seed=seed, name="main",
    )


def generate_vertical_dataset(
    model: FingerPhysicalModel,
    n_points: int = 100,
    positions: int = N_POSITIONS,
    constant_force: float = 3.0,
    seed: int = 0,
    train_fraction: float = 0.8,
    p_index: float = CENTER_INDEX,
) -> Dataset:
    """Vertical sweep at constant normal force along the face centerline.

    Positions cycle through the vertical grid so each height gets
    ``n_points / positions`` presses; the feed for each press is solved by
    bisection so the reference force equals ``constant_force``.
    """
    if n_points < 0 or positions < 1:
        raise ProtocolError("protocol counts must be non-negative and positions >= 1")
    if not 0.0 <= constant_force <= MAX_FORCE_N:
        raise ProtocolError(f"constant force {constant_force} N outside [0, {MAX_FORCE_N}] N")
    rng = np.random.default_rng(seed)
    grid = np.linspace(1.0, N_POSITIONS, positions) if positions > 1 else np.array([CENTER_INDEX])
    v = grid[np.arange(n_points) % positions]
    feeds = {}
    for level in np.unique(v):
        try:
            feeds[level] = inverse_feed_response(constant_force / model.stiffness_gain)
        except ValueError:
            raise ProtocolError(
                f"{constant_force} N is unreachable at vertical position {level}"
            ) from None
    feed = np.array([feeds[level] for level in v])
    p = np.full(n_points, float(p_index))
    split = _split_labels(n_points, int(round(train_fraction * n_points)), rng)
    a = sense_batch(model, p, feed, v, stream=(seed, VERTICAL_STREAM))
    f_n, t_z = _wrenches(model, p, feed, v)
    return Dataset(
        p_index=p, v_index=v, m_index=feed, a=a, f_n=f_n, t_z=t_z, split=split, seed=seed,
        name="vertical", meta={"constant_force": constant_force},
    )


def _wrenches(model, p, feed, v):
    pairs = [ground_truth_wrench(model, ContactState(pi, fi, vi)) for pi, fi, vi in zip(p, feed, v)]
    if not pairs:
        return np.zeros(0), np.zeros(0)
    f_n, t_z = map(np.array, zip(*pairs))
    return f_n, t_z
