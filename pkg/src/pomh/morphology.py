"""1-D binary morphology on zero-velocity indicators.

Border convention: dilation reads positions outside the signal as 0,
erosion reads them as 1. Closing therefore never destroys a zero-velocity
run that touches the signal boundary and never invents one out of nothing;
it fills 0-gaps of length <= w-1 strictly between 1-runs and extends
boundary-adjacent runs outward to the border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pomh import _kernels
from pomh.traces import VelocitySeries


def _check_window(w: int) -> int:
    w = int(w)
    if w < 3 or w % 2 == 0:
        raise ValueError(f"structuring element length must be an odd integer >= 3, got {w}")
    return w


def _as_bits(b) -> np.ndarray:
    arr = np.asarray(b)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("binary signal must be a nonempty 1-D array")
    return (arr != 0).astype(np.uint8)


def dilate(b, w: int) -> np.ndarray:
    """out[i] = 1 iff any b[j] = 1 with |j - i| <= (w-1)//2 (pad 0)."""
    w = _check_window(w)
    bits = _as_bits(b)
    h = (w - 1) // 2
    padded = np.concatenate((np.zeros(h, np.uint8), bits, np.zeros(h, np.uint8)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, w)
    return windows.max(axis=1)


def erode(b, w: int) -> np.ndarray:
    """out[i] = 1 iff all b[j] = 1 with |j - i| <= (w-1)//2 (pad 1)."""
    w = _check_window(w)
    bits = _as_bits(b)
    h = (w - 1) // 2
    padded = np.concatenate((np.ones(h, np.uint8), bits, np.ones(h, np.uint8)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, w)
    return windows.min(axis=1)


def close(b, w: int) -> np.ndarray:
    """Dilation followed by erosion (delegated to the run-space kernel)."""
    w = _check_window(w)
    return _kernels.closing(_as_bits(b), w)


@dataclass(frozen=True)
class ZeroRuns:
    """Maximal runs of the zero-velocity indicator with one instant per run."""

    starts: np.ndarray  # inclusive indices
    ends: np.ndarray  # inclusive indices
    break_instants: np.ndarray  # seconds, lower-middle sample of each run

    def __len__(self) -> int:
        return int(self.starts.size)


def zero_runs(b, times) -> ZeroRuns:
    bits = _as_bits(b)
    times = np.asarray(times, dtype=np.float64)
    if times.size != bits.size:
        raise ValueError(f"times length {times.size} != signal length {bits.size}")
    d = np.diff(bits.astype(np.int8))
    starts = np.flatnonzero(d == 1) + 1
    ends = np.flatnonzero(d == -1)
    if bits[0]:
        starts = np.concatenate(([0], starts))
    if bits[-1]:
        ends = np.concatenate((ends, [bits.size - 1]))
    mid = (starts + ends) // 2  # lower middle for even-length runs
    return ZeroRuns(starts.astype(np.int64), ends.astype(np.int64), times[mid])


def zero_indicator(v: VelocitySeries, axis: str) -> np.ndarray:
    return (v.axis(axis) == 0.0).astype(np.uint8)


def count_zeros_over_w(v: VelocitySeries, axis: str, w_grid) -> np.ndarray:
    """Run count of the closed zero indicator for every window in w_grid."""
    ws = np.asarray([_check_window(w) for w in np.asarray(w_grid).ravel()], dtype=np.int64)
    if len(v) == 0:
        raise ValueError("empty velocity series (no pen-down pairs)")
    return _kernels.close_run_counts(zero_indicator(v, axis), ws)


def make_w_grid(w_max: int) -> np.ndarray:
    w_max = _check_window(w_max)
    return np.arange(3, w_max + 1, 2, dtype=np.int64)
