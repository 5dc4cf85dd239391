"""Per-(child, symbol) feature rows and first-layer dichotomization.

Feature rows carry the raw predictors (w_hat per axis, reconstruction
distance, pen-down writing time, school grade). The logistic first layer
works on a dichotomized view: grade collapses to two school cycles, w_hat_x
and total_time to two levels against training-fold statistics, and the
distance is z-scored per symbol on the training fold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from pomh.oscillator import PomhFit
from pomh.reference import WidthEstimate
from pomh.traces import ChildRecord, total_pen_down_time


@dataclass(frozen=True)
class FeatureRow:
    child_id: str
    symbol: str
    w_hat_x: int
    w_hat_y: int
    saturated_x: bool
    saturated_y: bool
    dist: float  # mm, kind fixed by the run configuration
    total_time: float  # seconds, pen-down only
    grade: int
    label: bool


@dataclass(frozen=True)
class DichotomizedRow:
    child_id: str
    symbol: str
    dist_norm: float
    gr_sec: str  # cycle1 | cycle2
    gr_wx: str  # small | large
    gr_slow: str  # fast | slow
    label: bool


@dataclass(frozen=True)
class SymbolStats:
    median_wx: float
    mean_total_time: float
    dist_mean: float
    dist_sd: float


def build_feature_row(
    child: ChildRecord,
    symbol: str,
    fit: PomhFit,
    w_est: WidthEstimate,
    dist_kind: str,
) -> FeatureRow | None:
    """Assemble one row; returns None when the child never wrote the symbol."""
    trace = child.traces.get(symbol)
    if trace is None:
        return None
    return FeatureRow(
        child_id=child.child_id,
        symbol=symbol,
        w_hat_x=w_est.w_hat_x,
        w_hat_y=w_est.w_hat_y,
        saturated_x=w_est.saturated_x,
        saturated_y=w_est.saturated_y,
        dist=fit.distances[dist_kind],
        total_time=total_pen_down_time(trace),
        grade=child.grade,
        label=child.dysgraphia,
    )


def compute_training_stats(rows: list[FeatureRow]) -> dict[str, SymbolStats]:
    """Per-symbol medians/means/sds; call with training-fold rows only."""
    stats: dict[str, SymbolStats] = {}
    by_symbol: dict[str, list[FeatureRow]] = {}
    for r in rows:
        by_symbol.setdefault(r.symbol, []).append(r)
    for symbol, group in by_symbol.items():
        wx = np.array([r.w_hat_x for r in group], dtype=np.float64)
        tt = np.array([r.total_time for r in group])
        d = np.array([r.dist for r in group])
        sd = float(np.std(d, ddof=1)) if d.size > 1 else 0.0
        stats[symbol] = SymbolStats(
            median_wx=float(np.median(wx)),
            mean_total_time=float(np.mean(tt)),
            dist_mean=float(np.mean(d)),
            dist_sd=sd,
        )
    return stats


def dichotomize(
    rows: list[FeatureRow], training_stats: dict[str, SymbolStats]
) -> list[DichotomizedRow]:
    """Two-level factors against training statistics; ties go to the first level.

    gr_sec:  cycle1 iff grade <= 4.
    gr_wx:   small iff w_hat_x <= training median (per symbol).
    gr_slow: slow iff total_time > training mean (per symbol); equality -> fast.
    dist_norm: (dist - training mean) / training sd, per symbol.
    """
    out: list[DichotomizedRow] = []
    warned: set[str] = set()
    for r in rows:
        st = training_stats[r.symbol]
        if st.dist_sd > 0:
            dist_norm = (r.dist - st.dist_mean) / st.dist_sd
        else:
            if r.symbol not in warned:
                warnings.warn(
                    f"symbol {r.symbol!r}: zero distance spread in training data; "
                    "dist_norm forced to 0",
                    stacklevel=2,
                )
                warned.add(r.symbol)
            dist_norm = 0.0
        out.append(
            DichotomizedRow(
                child_id=r.child_id,
                symbol=r.symbol,
                dist_norm=dist_norm,
                gr_sec="cycle1" if r.grade <= 4 else "cycle2",
                gr_wx="small" if r.w_hat_x <= st.median_wx else "large",
                gr_slow="slow" if r.total_time > st.mean_total_time else "fast",
                label=r.label,
            )
        )
    return out


def encode_rows(rows: list[DichotomizedRow]) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Numeric design columns (second level -> 1) and the label vector."""
    data = {
        "dist_norm": np.array([r.dist_norm for r in rows]),
        "gr_sec": np.array([1.0 if r.gr_sec == "cycle2" else 0.0 for r in rows]),
        "gr_wx": np.array([1.0 if r.gr_wx == "large" else 0.0 for r in rows]),
        "gr_slow": np.array([1.0 if r.gr_slow == "slow" else 0.0 for r in rows]),
    }
    y = np.array([1 if r.label else 0 for r in rows], dtype=np.int64)
    return data, y


RF_PREDICTORS = ("dist", "section", "total_time", "w_hat_x", "w_hat_y")
SVM_PREDICTORS = ("dist", "section", "total_time", "w_hat_x")


def predictor_matrix(rows: list[FeatureRow], names=RF_PREDICTORS) -> np.ndarray:
    cols = {
        "dist": lambda r: r.dist,
        "section": lambda r: float(r.grade),
        "total_time": lambda r: r.total_time,
        "w_hat_x": lambda r: float(r.w_hat_x),
        "w_hat_y": lambda r: float(r.w_hat_y),
    }
    return np.array([[cols[n](r) for n in names] for r in rows], dtype=np.float64)


def feature_table_csv(rows: list[FeatureRow]) -> str:
    header = "child_id,symbol,w_hat_x,dist,total_time,section,dysgraphia,w_hat_y,saturated_x,saturated_y"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.child_id},{r.symbol},{r.w_hat_x},{r.dist:.6f},{r.total_time:.6f},"
            f"{r.grade},{int(r.label)},{r.w_hat_y},{int(r.saturated_x)},{int(r.saturated_y)}"
        )
    return "\n".join(lines) + "\n"


def cohort_missing_summary(children: list[ChildRecord]) -> dict[str, dict[str, float]]:
    """Complete / incomplete counts and missing rate per class."""
    out = {}
    for label, name in ((False, "td"), (True, "dysgraphia")):
        group = [c for c in children if c.dysgraphia == label]
        incomplete = sum(1 for c in group if len(c.missing_symbols) > 0)
        out[name] = {
            "complete": len(group) - incomplete,
            "incomplete": incomplete,
            "missing_rate": incomplete / len(group) if group else float("nan"),
        }
    return out
