"""Piecewise-sinusoid velocity model of a handwriting trace.

Each axis velocity is modeled, between consecutive zero-velocity instants
t_i < t_{i+1}, as a(t) * sin(omega(t) * t + phi(t)) with

    omega = pi / (t_{i+1} - t_i),   phi = -pi * t_i / (t_{i+1} - t_i),

so the modeled velocity vanishes exactly at both segment ends. The
amplitude is (pi/2) times the mean of the sampled velocities whose interval
midpoints fall inside the segment, which recovers the peak of a half-sine
lobe exactly. Positions are the analytic integral, re-anchored per segment
at the recorded coordinate nearest the segment start so errors do not
accumulate across segments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pomh import morphology
from pomh.traces import Trace, VelocitySeries, compute_velocity, stroke_boundaries

DISTANCE_KINDS = ("L1", "L2", "Linf")


@dataclass(frozen=True)
class PomhSegment:
    t_start: float
    t_end: float
    a: float  # mm/s
    omega: float  # rad/s
    phi: float  # rad


@dataclass(frozen=True)
class AxisModel:
    """Per-axis piecewise model; breaks has len(segments) + 1 entries."""

    breaks: np.ndarray
    a: np.ndarray
    omega: np.ndarray
    phi: np.ndarray
    anchor: np.ndarray

    @property
    def segments(self) -> list[PomhSegment]:
        return [
            PomhSegment(
                float(self.breaks[i]),
                float(self.breaks[i + 1]),
                float(self.a[i]),
                float(self.omega[i]),
                float(self.phi[i]),
            )
            for i in range(self.a.size)
        ]

    def segment_index(self, times: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breaks, times, side="right") - 1
        return np.minimum(np.maximum(idx, 0), self.a.size - 1)

    def velocity_at(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64)
        i = self.segment_index(times)
        return self.a[i] * np.sin(self.omega[i] * (times - self.breaks[i]))

    def position_at(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64)
        i = self.segment_index(times)
        return self.anchor[i] + (self.a[i] / self.omega[i]) * (
            1.0 - np.cos(self.omega[i] * (times - self.breaks[i]))
        )


@dataclass(frozen=True)
class ReconstructionDistance:
    kind: str
    value: float  # mm, mean over points
    n_points: int


@dataclass(frozen=True)
class PomhFit:
    axis_x: AxisModel
    axis_y: AxisModel
    t: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    n_zeros_x: int  # zero-velocity runs found on x (before adding endpoints)
    n_zeros_y: int
    distances: dict[str, float]

    @property
    def n_points(self) -> int:
        return int(self.t.size)


def _segment_amplitudes(v_mid: np.ndarray, v_vals: np.ndarray, breaks: np.ndarray) -> np.ndarray:
    """(pi/2) * mean of sampled velocities per segment; empty segments get 0."""
    n_seg = breaks.size - 1
    idx = np.searchsorted(breaks, v_mid, side="right") - 1
    # midpoints outside [first, last) belong nowhere; mask them out
    inside = (idx >= 0) & (idx < n_seg)
    idx = idx[inside]
    sums = np.bincount(idx, weights=v_vals[inside], minlength=n_seg)
    counts = np.bincount(idx, minlength=n_seg)
    amp = np.zeros(n_seg)
    nz = counts > 0
    amp[nz] = (np.pi / 2.0) * sums[nz] / counts[nz]
    return amp


def build_axis_model(
    v_mid: np.ndarray,
    v_vals: np.ndarray,
    interior_breaks: np.ndarray,
    t_start: float,
    t_end: float,
    trace_t: np.ndarray,
    trace_coord: np.ndarray,
) -> AxisModel:
    interior = np.asarray(interior_breaks, dtype=np.float64)
    interior = interior[(interior > t_start) & (interior < t_end)]
    breaks = np.unique(np.concatenate(([t_start], interior, [t_end])))
    dt = np.diff(breaks)
    omega = np.pi / dt
    phi = -np.pi * breaks[:-1] / dt
    a = _segment_amplitudes(v_mid, v_vals, breaks)
    # anchor each segment at the recorded coordinate nearest its start
    pos = np.searchsorted(trace_t, breaks[:-1])
    pos = np.clip(pos, 1, trace_t.size - 1)
    use_prev = np.abs(trace_t[pos - 1] - breaks[:-1]) <= np.abs(trace_t[pos] - breaks[:-1])
    nearest = np.where(use_prev, pos - 1, pos)
    return AxisModel(breaks, a, omega, phi, trace_coord[nearest])


def estimate_segments(
    v: VelocitySeries,
    axis: str,
    interior_breaks,
    t_start: float,
    t_end: float,
    trace_t=None,
    trace_coord=None,
) -> list[PomhSegment]:
    """Segment parameters for one axis given its interior break instants."""
    if trace_t is None:
        trace_t = np.array([t_start, t_end])
        trace_coord = np.zeros(2)
    model = build_axis_model(
        v.t_mid, v.axis(axis), np.asarray(interior_breaks, dtype=np.float64),
        t_start, t_end, np.asarray(trace_t, dtype=np.float64), np.asarray(trace_coord, dtype=np.float64),
    )
    return model.segments


def distance(orig_x, orig_y, recon_x, recon_y, kind: str) -> ReconstructionDistance:
    orig_x = np.asarray(orig_x, dtype=np.float64)
    orig_y = np.asarray(orig_y, dtype=np.float64)
    recon_x = np.asarray(recon_x, dtype=np.float64)
    recon_y = np.asarray(recon_y, dtype=np.float64)
    if not (orig_x.size == orig_y.size == recon_x.size == recon_y.size):
        raise ValueError("original and reconstructed traces have mismatched lengths")
    dx = np.abs(orig_x - recon_x)
    dy = np.abs(orig_y - recon_y)
    if kind == "L1":
        per_point = dx + dy
    elif kind == "L2":
        per_point = np.sqrt(dx * dx + dy * dy)
    elif kind == "Linf":
        per_point = np.maximum(dx, dy)
    else:
        raise ValueError(f"unknown distance kind {kind!r}; expected one of {DISTANCE_KINDS}")
    return ReconstructionDistance(kind, float(per_point.mean()), int(orig_x.size))


def interior_break_instants(
    trace: Trace, v: VelocitySeries, w: int, axis: str
) -> tuple[np.ndarray, int]:
    """Zero-run instants of the closed indicator plus stroke boundaries."""
    closed = morphology.close(morphology.zero_indicator(v, axis), w)
    runs = morphology.zero_runs(closed, v.t_mid)
    return runs.break_instants, len(runs)


def _distances_all(orig_x, orig_y, recon_x, recon_y) -> dict[str, float]:
    """All three mean distances in one pass over the residuals."""
    dx = np.abs(orig_x - recon_x)
    dy = np.abs(orig_y - recon_y)
    return {
        "L1": float(np.mean(dx + dy)),
        "L2": float(np.mean(np.sqrt(dx * dx + dy * dy))),
        "Linf": float(np.mean(np.maximum(dx, dy))),
    }


def fit_pomh(trace: Trace, w_x: int, w_y: int, v: VelocitySeries | None = None) -> PomhFit:
    """Full model fit: break extraction at (w_x, w_y), segments, reconstruction."""
    if v is None:
        v = compute_velocity(trace)
    if len(v) == 0:
        raise ValueError("trace has no pen-down movement to model")
    strokes = np.asarray(stroke_boundaries(trace), dtype=np.float64)
    t0, t1 = float(trace.t[0]), float(trace.t[-1])
    fits = {}
    n_zero_runs = {}
    for axis, w, coord in (("x", w_x, trace.x), ("y", w_y, trace.y)):
        instants, n_runs = interior_break_instants(trace, v, w, axis)
        interior = np.concatenate((instants, strokes))
        fits[axis] = build_axis_model(v.t_mid, v.axis(axis), interior, t0, t1, trace.t, coord)
        n_zero_runs[axis] = n_runs
    x_hat = fits["x"].position_at(trace.t)
    y_hat = fits["y"].position_at(trace.t)
    dists = _distances_all(trace.x, trace.y, x_hat, y_hat)
    return PomhFit(
        axis_x=fits["x"],
        axis_y=fits["y"],
        t=trace.t,
        x_hat=x_hat,
        y_hat=y_hat,
        n_zeros_x=n_zero_runs["x"],
        n_zeros_y=n_zero_runs["y"],
        distances=dists,
    )


def reconstruction_csv(trace: Trace, fit: PomhFit) -> str:
    lines = ["t,x,y,x_hat,y_hat"]
    for i in range(len(trace)):
        lines.append(
            f"{trace.t[i]:.6f},{trace.x[i]:.6f},{trace.y[i]:.6f},"
            f"{fit.x_hat[i]:.6f},{fit.y_hat[i]:.6f}"
        )
    return "\n".join(lines) + "\n"
