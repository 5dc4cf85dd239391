"""Age-referenced zero-count table and closing-width estimation.

For each (symbol, axis, age) the table stores the median number of zero
runs observed among typically developing training children within a
+/- 3 month age window, pooled over every window size w in the grid
{3, 5, ..., w_max}. A child's width estimate w_hat is then the smallest w
whose zero count drops to (or below) the table value for the child's age;
if no w in the grid reaches it, w_hat saturates at w_max.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from pomh import morphology
from pomh.traces import ChildRecord, VelocitySeries

AGE_WINDOW_MONTHS = 3
AXES = ("x", "y")


@dataclass(frozen=True)
class ZeroProfile:
    """Zero-run counts per axis over the w grid; nonincreasing in w."""

    w_grid: np.ndarray
    counts_x: np.ndarray
    counts_y: np.ndarray

    def counts(self, axis: str) -> np.ndarray:
        if axis == "x":
            return self.counts_x
        if axis == "y":
            return self.counts_y
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")

    def truncated(self, w_max: int) -> "ZeroProfile":
        keep = self.w_grid <= w_max
        return ZeroProfile(self.w_grid[keep], self.counts_x[keep], self.counts_y[keep])


@dataclass(frozen=True)
class WidthEstimate:
    w_hat_x: int
    w_hat_y: int
    saturated_x: bool
    saturated_y: bool


def zero_profile(v: VelocitySeries, w_grid) -> ZeroProfile:
    ws = np.asarray(w_grid, dtype=np.int64)
    return ZeroProfile(
        w_grid=ws,
        counts_x=morphology.count_zeros_over_w(v, "x", ws),
        counts_y=morphology.count_zeros_over_w(v, "y", ws),
    )


def _median(values: np.ndarray) -> float:
    # mean-of-middles for even cardinality
    return float(np.median(values))


def median_zero_count(profile: ZeroProfile, axis: str, w_max: int | None = None) -> float:
    """Per-child median of the zero counts over the w grid (one axis)."""
    p = profile if w_max is None else profile.truncated(w_max)
    counts = p.counts(axis)
    if counts.size == 0:
        raise ValueError("empty zero profile")
    return _median(counts)


class UnsupportedCellError(ValueError):
    """No training data anywhere on the age grid for a (symbol, axis)."""


@dataclass
class ReferenceTable:
    w_max: int
    age_grid: np.ndarray  # months, ascending
    values: dict[str, dict[str, np.ndarray]]  # symbol -> axis -> N per age
    support: dict[str, dict[str, np.ndarray]]  # observation counts before fill
    source_child_ids: frozenset  # leakage audit: who the table was built from

    def lookup(self, symbol: str, axis: str, age_months: int) -> float:
        if symbol not in self.values:
            raise UnsupportedCellError(f"symbol {symbol!r} has no reference data")
        ages = self.age_grid
        idx = int(np.clip(np.searchsorted(ages, age_months), 0, ages.size - 1))
        if idx > 0 and abs(int(ages[idx - 1]) - age_months) <= abs(int(ages[idx]) - age_months):
            idx -= 1
        n = self.values[symbol][axis][idx]
        if np.isnan(n):
            raise UnsupportedCellError(
                f"no reference support for symbol {symbol!r}, age {age_months} months"
            )
        return float(n)


def build_reference(
    td_children: list[ChildRecord],
    profiles: dict[tuple[str, str], ZeroProfile],
    w_max: int,
    age_grid=None,
) -> ReferenceTable:
    """Aggregate zero counts of TD children into the age-indexed table.

    profiles maps (child_id, symbol) to that trace's ZeroProfile. Only
    children in td_children contribute (callers pass the TD subset of the
    training fold). Ages with no support borrow the nearest supported age.
    """
    bad = [c.child_id for c in td_children if c.dysgraphia]
    if bad:
        raise ValueError(f"reference table must be built from TD children only; got {bad[:3]}")
    ages = np.array(sorted({c.age_months for c in td_children}), dtype=np.int64)
    if age_grid is None:
        age_grid = np.arange(ages.min(), ages.max() + 1, dtype=np.int64)
    else:
        age_grid = np.asarray(age_grid, dtype=np.int64)
    symbols = sorted({s for c in td_children for s in c.traces})
    values: dict[str, dict[str, np.ndarray]] = {}
    support: dict[str, dict[str, np.ndarray]] = {}
    for symbol in symbols:
        per_child = [
            (c.age_months, profiles[(c.child_id, symbol)])
            for c in td_children
            if symbol in c.traces and (c.child_id, symbol) in profiles
        ]
        values[symbol] = {}
        support[symbol] = {}
        for axis in AXES:
            n_col = np.full(age_grid.size, np.nan)
            s_col = np.zeros(age_grid.size, dtype=np.int64)
            child_ages = np.array([a for a, _ in per_child], dtype=np.int64)
            counts = [p.truncated(w_max).counts(axis) for _, p in per_child]
            for k, a in enumerate(age_grid):
                in_window = np.abs(child_ages - a) <= AGE_WINDOW_MONTHS
                if not in_window.any():
                    continue
                pooled = np.concatenate([counts[i] for i in np.flatnonzero(in_window)])
                n_col[k] = max(1.0, _median(pooled))
                s_col[k] = pooled.size
            # borrow nearest supported age for empty cells (ties -> younger)
            filled = np.flatnonzero(~np.isnan(n_col))
            if filled.size:
                for k in np.flatnonzero(np.isnan(n_col)):
                    j = filled[np.argmin(np.abs(filled - k))]
                    n_col[k] = n_col[j]
            values[symbol][axis] = n_col
            support[symbol][axis] = s_col
    return ReferenceTable(
        w_max=int(w_max),
        age_grid=age_grid,
        values=values,
        support=support,
        source_child_ids=frozenset(c.child_id for c in td_children),
    )


def estimate_w(
    profile: ZeroProfile, reference: ReferenceTable, age_months: int, symbol: str
) -> WidthEstimate:
    """Smallest grid w whose count reaches the age reference, per axis."""
    p = profile.truncated(reference.w_max)
    out = {}
    sat = {}
    for axis in AXES:
        n_ref = reference.lookup(symbol, axis, age_months)
        counts = p.counts(axis)
        ok = np.flatnonzero(counts <= n_ref)
        if ok.size:
            out[axis] = int(p.w_grid[ok[0]])
            sat[axis] = False
        else:
            out[axis] = int(reference.w_max)
            sat[axis] = True
    return WidthEstimate(out["x"], out["y"], sat["x"], sat["y"])


def reference_to_csv(table: ReferenceTable) -> str:
    lines = ["symbol,axis,age_months,N,support"]
    for symbol in sorted(table.values):
        for axis in AXES:
            n_col = table.values[symbol][axis]
            s_col = table.support[symbol][axis]
            for k, a in enumerate(table.age_grid):
                n = "" if np.isnan(n_col[k]) else f"{n_col[k]:g}"
                lines.append(f"{symbol},{axis},{int(a)},{n},{int(s_col[k])}")
    return "\n".join(lines) + "\n"


def reference_from_csv(content: str, w_max: int) -> ReferenceTable:
    rows = list(io.StringIO(content))
    if not rows or rows[0].strip() != "symbol,axis,age_months,N,support":
        raise ValueError("bad reference CSV header")
    raw: dict[str, dict[str, dict[int, tuple[float, int]]]] = {}
    for line in rows[1:]:
        line = line.strip()
        if not line:
            continue
        symbol, axis, age_s, n_s, sup_s = line.split(",")
        cell = raw.setdefault(symbol, {}).setdefault(axis, {})
        cell[int(age_s)] = (float(n_s) if n_s else np.nan, int(sup_s))
    ages = sorted({a for sym in raw.values() for ax in sym.values() for a in ax})
    age_grid = np.array(ages, dtype=np.int64)
    values: dict[str, dict[str, np.ndarray]] = {}
    support: dict[str, dict[str, np.ndarray]] = {}
    for symbol, per_axis in raw.items():
        values[symbol] = {}
        support[symbol] = {}
        for axis, cells in per_axis.items():
            values[symbol][axis] = np.array([cells.get(a, (np.nan, 0))[0] for a in ages])
            support[symbol][axis] = np.array([cells.get(a, (np.nan, 0))[1] for a in ages])
    return ReferenceTable(
        w_max=int(w_max),
        age_grid=age_grid,
        values=values,
        support=support,
        source_child_ids=frozenset(),
    )
