"""Sampled handwriting traces: ingestion, kinematics, cohort manifests.

A trace is one symbol written by one child, recorded as timestamped pen
coordinates at a nominal 200 Hz with coordinates snapped to the tablet
resolution grid (default 0.25 mm). Snapping makes "velocity equals zero"
an exact test on consecutive identical positions.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYMBOLS: tuple[str, ...] = tuple("abcdefghijklmnopqrstuvwxyz0123456789")

NOMINAL_RATE_HZ = 200.0
AGE_MONTHS_MIN = 78
AGE_MONTHS_MAX = 192


class TraceError(ValueError):
    """Malformed trace file or violated trace invariant."""


class ManifestError(ValueError):
    """Malformed cohort manifest or dangling trace reference."""


def snap_to_grid(values: np.ndarray, resolution_mm: float) -> np.ndarray:
    return np.round(np.asarray(values, dtype=np.float64) / resolution_mm) * resolution_mm


@dataclass(frozen=True)
class Sample:
    t: float
    x: float
    y: float
    pen_down: bool


@dataclass(frozen=True)
class Trace:
    """One symbol's recording; arrays are parallel and immutable by convention."""

    symbol: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    pen_down: np.ndarray
    resolution_mm: float = 0.25

    def __post_init__(self):
        for name in ("t", "x", "y"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "pen_down", np.asarray(self.pen_down, dtype=bool))
        if self.symbol not in SYMBOLS:
            raise TraceError(f"unknown symbol {self.symbol!r}")
        n = self.t.size
        if n < 4:
            raise TraceError(f"trace needs >= 4 samples, got {n}")
        if not (self.x.size == n and self.y.size == n and self.pen_down.size == n):
            raise TraceError("sample arrays have mismatched lengths")
        if not np.all(np.diff(self.t) > 0):
            bad = int(np.flatnonzero(np.diff(self.t) <= 0)[0]) + 1
            raise TraceError(f"non-monotone timestamp at sample {bad}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise TraceError("non-finite coordinate")
        if self.resolution_mm <= 0:
            raise TraceError("resolution_mm must be positive")
        period = np.median(np.diff(self.t))
        nominal = 1.0 / NOMINAL_RATE_HZ
        if not (0.8 * nominal <= period <= 1.2 * nominal):
            warnings.warn(
                f"trace {self.symbol!r}: median sampling period {period * 1e3:.2f} ms "
                f"is outside 20% of nominal {nominal * 1e3:.2f} ms",
                stacklevel=2,
            )

    def __len__(self) -> int:
        return int(self.t.size)

    def sample(self, i: int) -> Sample:
        return Sample(float(self.t[i]), float(self.x[i]), float(self.y[i]), bool(self.pen_down[i]))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


@dataclass(frozen=True)
class VelocitySeries:
    """Average velocities over consecutive pen-down sample pairs.

    t_mid holds interval midpoints. Pairs spanning a pen-up gap are
    excluded, so a trace of k strokes yields sum(len(stroke) - 1) entries.
    """

    t_mid: np.ndarray
    vx: np.ndarray
    vy: np.ndarray

    def __len__(self) -> int:
        return int(self.t_mid.size)

    def axis(self, name: str) -> np.ndarray:
        if name == "x":
            return self.vx
        if name == "y":
            return self.vy
        raise ValueError(f"axis must be 'x' or 'y', got {name!r}")


@dataclass
class ChildRecord:
    child_id: str
    age_months: int
    grade: int
    dysgraphia: bool
    traces: dict[str, Trace] = field(default_factory=dict)

    def __post_init__(self):
        if not (1 <= self.grade <= 9):
            raise ManifestError(f"child {self.child_id}: grade {self.grade} outside 1..9")
        if self.age_months <= 0:
            raise ManifestError(f"child {self.child_id}: nonpositive age")
        if not (AGE_MONTHS_MIN <= self.age_months <= AGE_MONTHS_MAX):
            warnings.warn(
                f"child {self.child_id}: age {self.age_months} months outside the "
                f"expected [{AGE_MONTHS_MIN}, {AGE_MONTHS_MAX}] range",
                stacklevel=2,
            )

    @property
    def missing_symbols(self) -> tuple[str, ...]:
        return tuple(s for s in SYMBOLS if s not in self.traces)


# ---------------------------------------------------------------------------
# trace CSV format: optional "# resolution_mm=..." comment lines, then a
# "t,x,y,pen" header, then one row per sample (t with 6 decimals).
# ---------------------------------------------------------------------------


def parse_trace(content: bytes | str, symbol: str) -> Trace:
    if isinstance(content, bytes):
        content = content.decode("utf-8")
    resolution = 0.25
    rows_t, rows_x, rows_y, rows_pen = [], [], [], []
    header_seen = False
    for lineno, raw in enumerate(io.StringIO(content), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("resolution_mm="):
                try:
                    resolution = float(body.split("=", 1)[1])
                except ValueError as exc:
                    raise TraceError(f"line {lineno}: bad resolution header {line!r}") from exc
            continue
        if not header_seen:
            if line != "t,x,y,pen":
                raise TraceError(f"line {lineno}: expected header 't,x,y,pen', got {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise TraceError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            t = float(parts[0])
            x = float(parts[1])
            y = float(parts[2])
            pen = int(parts[3])
        except ValueError as exc:
            raise TraceError(f"line {lineno}: malformed row {line!r}") from exc
        if pen not in (0, 1):
            raise TraceError(f"line {lineno}: pen must be 0 or 1, got {parts[3]}")
        if rows_t and t <= rows_t[-1]:
            raise TraceError(f"non-monotone timestamp at line {lineno}")
        rows_t.append(t)
        rows_x.append(x)
        rows_y.append(y)
        rows_pen.append(bool(pen))
    if not header_seen:
        raise TraceError("missing 't,x,y,pen' header")
    x = snap_to_grid(np.array(rows_x), resolution)
    y = snap_to_grid(np.array(rows_y), resolution)
    return Trace(symbol, np.array(rows_t), x, y, np.array(rows_pen), resolution)


def serialize_trace(trace: Trace) -> str:
    lines = [f"# resolution_mm={trace.resolution_mm:g}", "t,x,y,pen"]
    decimals = max(0, int(np.ceil(-np.log10(trace.resolution_mm))) + 1) if trace.resolution_mm < 1 else 2
    for i in range(len(trace)):
        lines.append(
            f"{trace.t[i]:.6f},{trace.x[i]:.{decimals}f},{trace.y[i]:.{decimals}f},{int(trace.pen_down[i])}"
        )
    return "\n".join(lines) + "\n"


def compute_velocity(trace: Trace) -> VelocitySeries:
    dt = np.diff(trace.t)
    if np.any(dt == 0):
        raise TraceError("duplicate timestamps make velocity undefined")
    keep = trace.pen_down[:-1] & trace.pen_down[1:]
    t_mid = (trace.t[:-1] + trace.t[1:]) / 2.0
    vx = np.diff(trace.x) / dt
    vy = np.diff(trace.y) / dt
    return VelocitySeries(t_mid[keep], vx[keep], vy[keep])


def total_pen_down_time(trace: Trace) -> float:
    keep = trace.pen_down[:-1] & trace.pen_down[1:]
    return float(np.sum(np.diff(trace.t)[keep]))


def stroke_boundaries(trace: Trace) -> list[float]:
    """Timestamps where the pen leaves or returns to the paper.

    Used as additional oscillator break points: motion is never modeled
    across a pen-up gap.
    """
    pen = trace.pen_down.astype(np.int8)
    ups = np.flatnonzero(np.diff(pen) == -1)  # last pen-down sample of a stroke
    downs = np.flatnonzero(np.diff(pen) == 1) + 1  # first pen-down sample
    times = [float(trace.t[i]) for i in ups]
    times += [float(trace.t[i]) for i in downs]
    return sorted(times)


# ---------------------------------------------------------------------------
# manifest: JSON array of {child_id, age_months, grade, dysgraphia, traces}
# where traces maps symbol -> path relative to the manifest location.
# ---------------------------------------------------------------------------


def _check_duplicate_keys(pairs):
    d = {}
    for k, v in pairs:
        if k in d:
            raise ManifestError(f"duplicate key {k!r} in manifest object")
        d[k] = v
    return d


def load_manifest(path: str | Path, trace_loader=parse_trace) -> list[ChildRecord]:
    """Load a cohort manifest and every trace file it references.

    Raises ManifestError for duplicate children, duplicate (child, symbol)
    entries, or dangling file references (the offending path is named).
    """
    path = Path(path)
    base = path.parent
    try:
        entries = json.loads(path.read_text(), object_pairs_hook=_check_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise ManifestError("manifest must be a JSON array of child objects")
    records: list[ChildRecord] = []
    seen_ids: set[str] = set()
    for entry in entries:
        child_id = str(entry["child_id"])
        if child_id in seen_ids:
            raise ManifestError(f"duplicate child_id {child_id!r}")
        seen_ids.add(child_id)
        traces: dict[str, Trace] = {}
        for symbol, rel in entry.get("traces", {}).items():
            if symbol not in SYMBOLS:
                raise ManifestError(f"child {child_id}: unknown symbol {symbol!r}")
            fpath = base / rel
            if not fpath.is_file():
                raise ManifestError(f"child {child_id}: missing trace file {fpath}")
            try:
                traces[symbol] = trace_loader(fpath.read_bytes(), symbol)
            except TraceError as exc:
                raise ManifestError(f"child {child_id}, symbol {symbol}: {exc}") from exc
        records.append(
            ChildRecord(
                child_id=child_id,
                age_months=int(entry["age_months"]),
                grade=int(entry["grade"]),
                dysgraphia=bool(entry["dysgraphia"]),
                traces=traces,
            )
        )
    return records


def class_counts(children: list[ChildRecord]) -> tuple[int, int]:
    """(typically developing, dysgraphia) head count."""
    pos = sum(1 for c in children if c.dysgraphia)
    return len(children) - pos, pos
