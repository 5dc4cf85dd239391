"""Deterministic synthetic cohorts with oscillator-exact traces.

Traces are generated directly from the piecewise-sinusoid velocity model,
so every upstream stage has known ground truth (break instants, amplitudes,
exact positions). Dysgraphia-like writing is planted mechanically: extra
zero-velocity dwells (more stops) and additive tremor (less fluent
oscillation), scaled by a per-child severity factor. Typically developing
children get fewer velocity lobes as age increases, which plants the
age-declining zero-count trend the reference table is built on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from pomh.traces import SYMBOLS, ChildRecord, Trace, serialize_trace, snap_to_grid


@dataclass(frozen=True)
class Perturbation:
    # defaults are the calibrated benchmark level: strong enough for a
    # learnable child-level signal, weak enough to leave class overlap
    extra_stops: int = 2
    stop_duration: float = 0.06  # seconds of frozen pen position per stop
    tremor_amp: float = 0.08  # mm
    tremor_hz: float = 9.0

    def scaled(self, severity: float) -> "Perturbation":
        return Perturbation(
            extra_stops=max(0, int(round(self.extra_stops * severity))),
            stop_duration=self.stop_duration,
            tremor_amp=self.tremor_amp * severity,
            tremor_hz=self.tremor_hz,
        )


@dataclass(frozen=True)
class GeneratorSpec:
    sampling_hz: float = 200.0
    resolution_mm: float = 0.25
    noise_sd: float = 0.05  # mm, Gaussian position noise before quantization
    perturbation: Perturbation = field(default_factory=Perturbation)
    age_trend_per_year: float = 0.45  # lobes removed per axis per year of age
    lobe_duration: tuple[float, float] = (0.07, 0.16)  # seconds, uniform range
    # peak speeds span several resolution cells per sample so the pen only
    # reads as stopped near lobe boundaries, as on a real tablet
    lobe_speed: tuple[float, float] = (25.0, 110.0)  # mm/s, uniform range
    seed: int = 0

    def __post_init__(self):
        max_freq = 1.0 / (2.0 * self.lobe_duration[0])
        if self.sampling_hz <= 2.0 * max_freq:
            raise ValueError(
                f"sampling rate {self.sampling_hz} Hz too low for lobes of "
                f"{self.lobe_duration[0]} s (max oscillator frequency {max_freq:.1f} Hz)"
            )
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


@dataclass(frozen=True)
class SymbolTemplate:
    """Signed half-sine velocity lobes per axis: (duration s, peak mm/s)."""

    lobes_x: tuple[tuple[float, float], ...]
    lobes_y: tuple[tuple[float, float], ...]

    def breaks(self, axis: str) -> np.ndarray:
        lobes = self.lobes_x if axis == "x" else self.lobes_y
        return np.concatenate(([0.0], np.cumsum([d for d, _ in lobes])))


def base_lobe_counts(symbol: str) -> tuple[int, int]:
    idx = SYMBOLS.index(symbol)
    return 3 + (idx * 7) % 4, 3 + (idx * 5) % 4


def make_template(
    spec: GeneratorSpec, symbol: str, age_months: int, rng: np.random.Generator
) -> SymbolTemplate:
    """Lobe layout for one (symbol, child): younger writers get extra lobes."""
    base_x, base_y = base_lobe_counts(symbol)
    years_young = max(0.0, 16.0 - age_months / 12.0)
    extra = int(round(spec.age_trend_per_year * years_young))
    dt = 1.0 / spec.sampling_hz
    lobes = {}
    for axis, base in (("x", base_x), ("y", base_y)):
        n = base + extra + int(rng.integers(0, 2))
        durations = rng.uniform(*spec.lobe_duration, size=n)
        durations = np.maximum(np.round(durations / dt), 2) * dt  # align to sample grid
        amps = rng.uniform(*spec.lobe_speed, size=n)
        signs = np.empty(n)
        signs[0] = 1.0 if rng.random() < 0.5 else -1.0
        for i in range(1, n):
            # mostly alternate, to oscillate around a baseline
            signs[i] = -signs[i - 1] if rng.random() < 0.8 else signs[i - 1]
        lobes[axis] = tuple((float(d), float(s * a)) for d, a, s in zip(durations, amps, signs))
    # both axes must span the same writing time: rescale y to x's span
    span_x = sum(d for d, _ in lobes["x"])
    span_y = sum(d for d, _ in lobes["y"])
    scale = span_x / span_y
    lobes_y = []
    for d, a in lobes["y"]:
        d2 = max(2, round(d * scale / dt)) * dt
        lobes_y.append((float(d2), float(a)))
    # force exact span match by adjusting the last lobe
    diff = span_x - sum(d for d, _ in lobes_y)
    d_last, a_last = lobes_y[-1]
    lobes_y[-1] = (float(max(2 * dt, d_last + round(diff / dt) * dt)), a_last)
    return SymbolTemplate(lobes_x=lobes["x"], lobes_y=tuple(lobes_y))


def _axis_positions(template_lobes, times: np.ndarray) -> np.ndarray:
    """Exact integral of the lobe velocities at the sample times."""
    durations = np.array([d for d, _ in template_lobes])
    amps = np.array([a for _, a in template_lobes])
    breaks = np.concatenate(([0.0], np.cumsum(durations)))
    omega = np.pi / durations
    # positions at lobe starts: each lobe displaces 2 a / omega
    start_pos = np.concatenate(([0.0], np.cumsum(2.0 * amps / omega)))
    idx = np.clip(np.searchsorted(breaks, times, side="right") - 1, 0, durations.size - 1)
    rel = times - breaks[idx]
    return start_pos[idx] + (amps[idx] / omega[idx]) * (1.0 - np.cos(omega[idx] * rel))


def smooth_trace_with_breaks(
    spec: GeneratorSpec,
    symbol: str,
    rng: np.random.Generator | None = None,
    age_months: int = 120,
) -> tuple[Trace, np.ndarray, np.ndarray]:
    """Generate one noiseless-model trace; returns (trace, breaks_x, breaks_y)."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    template = make_template(spec, symbol, age_months, rng)
    dt = 1.0 / spec.sampling_hz
    span = sum(d for d, _ in template.lobes_x)
    n = int(round(span / dt)) + 1
    times = np.arange(n) * dt
    x = _axis_positions(template.lobes_x, times)
    y = _axis_positions(template.lobes_y, times)
    if spec.noise_sd > 0:
        x = x + rng.normal(0.0, spec.noise_sd, size=n)
        y = y + rng.normal(0.0, spec.noise_sd, size=n)
    x = snap_to_grid(x, spec.resolution_mm)
    y = snap_to_grid(y, spec.resolution_mm)
    trace = Trace(symbol, times, x, y, np.ones(n, dtype=bool), spec.resolution_mm)
    return trace, template.breaks("x"), template.breaks("y")


def gen_smooth_trace(
    spec: GeneratorSpec,
    symbol: str,
    rng: np.random.Generator | None = None,
    age_months: int = 120,
) -> Trace:
    return smooth_trace_with_breaks(spec, symbol, rng, age_months)[0]


def perturb_trace(
    trace: Trace,
    perturbation: Perturbation,
    rng: np.random.Generator,
    resolution_mm: float | None = None,
) -> tuple[Trace, dict]:
    """Insert zero-velocity dwells and additive tremor; returns (trace, log).

    Tremor is applied before dwell insertion so dwell samples stay exactly
    frozen; coordinates are re-quantized last. Dwell sites are chosen away
    from existing zero-velocity samples so each dwell contributes one new
    zero run per axis.
    """
    res = trace.resolution_mm if resolution_mm is None else resolution_mm
    t = trace.t.copy()
    x = trace.x.copy()
    y = trace.y.copy()
    pen = trace.pen_down.copy()
    log: dict = {"tremor_amp": perturbation.tremor_amp, "stops": []}
    if perturbation.tremor_amp > 0:
        phase_x, phase_y = rng.uniform(0, 2 * np.pi, size=2)
        wt = 2 * np.pi * perturbation.tremor_hz * t
        x = x + perturbation.tremor_amp * np.sin(wt + phase_x)
        y = y + perturbation.tremor_amp * np.sin(wt + phase_y)
        x = snap_to_grid(x, res)
        y = snap_to_grid(y, res)
    n_stops = perturbation.extra_stops
    if n_stops > 0:
        dt = float(np.median(np.diff(t)))
        k = max(2, int(round(perturbation.stop_duration / dt)))
        margin = 12  # preferred clearance (samples) between a dwell and other zeros
        stopped = np.zeros(len(t), dtype=bool)
        frozen = (np.diff(x) == 0) | (np.diff(y) == 0)
        stopped[:-1] |= frozen
        stopped[1:] |= frozen
        stopped |= ~pen
        # clearance of each sample from the nearest stopped sample
        idx = np.flatnonzero(stopped)
        pos = np.arange(len(t))
        if idx.size:
            right = np.searchsorted(idx, pos)
            d_right = np.where(right < idx.size, idx[np.minimum(right, idx.size - 1)] - pos, len(t))
            d_left = np.where(right > 0, pos - idx[np.maximum(right - 1, 0)], len(t))
            clearance = np.minimum(d_left, d_right)
        else:
            clearance = np.full(len(t), len(t))
        clearance[: margin] = 0
        clearance[-margin:] = 0
        sites: list[int] = []
        order = np.argsort(-clearance, kind="stable")
        for cand in order:
            if clearance[cand] < 2 or not pen[cand]:
                break  # best-effort: no usable gap left
            if all(abs(cand - s) >= 2 * margin + k for s in sites):
                sites.append(int(cand))
            if len(sites) == n_stops:
                break
        for site in sorted(sites, reverse=True):
            x = np.concatenate((x[: site + 1], np.repeat(x[site], k), x[site + 1 :]))
            y = np.concatenate((y[: site + 1], np.repeat(y[site], k), y[site + 1 :]))
            pen = np.concatenate((pen[: site + 1], np.repeat(True, k), pen[site + 1 :]))
        # dwell insertion assumes (and preserves) uniform sampling
        t = t[0] + np.arange(len(x)) * dt
        log["stops"] = sorted(sites)
        log["stop_samples"] = k
    trace_out = Trace(trace.symbol, t, x, y, pen, res)
    return trace_out, log


@dataclass
class SyntheticCohort:
    children: list[ChildRecord]
    log: list[dict]


def _grade_for_age(age_months: int) -> int:
    return int(np.clip(age_months // 12 - 5, 1, 9))


def gen_cohort(
    spec: GeneratorSpec,
    n_children: int,
    dys_fraction: float = 0.12,
    seed: int | None = None,
    missing_rate_td: float = 0.0,
    missing_rate_dys: float = 0.0,
) -> SyntheticCohort:
    """Cohort with planted labels; dysgraphic children get perturbed traces."""
    if n_children < 20:
        raise ValueError("cohort needs at least 20 children")
    seed = spec.seed if seed is None else seed
    root = np.random.SeedSequence(seed)
    assign_rng = np.random.default_rng(root.spawn(1)[0])
    n_pos = int(round(n_children * dys_fraction))
    labels = np.zeros(n_children, dtype=bool)
    labels[assign_rng.choice(n_children, size=n_pos, replace=False)] = True
    children: list[ChildRecord] = []
    logs: list[dict] = []
    for i in range(n_children):
        crng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i)))
        age = int(crng.integers(78, 193))
        severity = float(crng.uniform(0.6, 1.3)) if labels[i] else 0.0
        # children differ in natural sloppiness, so the classes overlap
        child_noise = float(crng.uniform(0.6, 1.6)) * spec.noise_sd
        child_id = f"S{i:04d}"
        miss_rate = missing_rate_dys if labels[i] else missing_rate_td
        child_spec = replace(spec, noise_sd=child_noise)
        traces = {}
        entry = {"child_id": child_id, "label": bool(labels[i]), "severity": severity, "traces": {}}
        for j, symbol in enumerate(SYMBOLS):
            srng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, i, j)))
            if miss_rate > 0 and srng.random() < miss_rate:
                entry["traces"][symbol] = {"missing": True}
                continue
            trace = gen_smooth_trace(child_spec, symbol, srng, age)
            tlog = {"missing": False}
            if labels[i]:
                # the deficit shows sparsely: many symbols come out clean,
                # the affected ones deviate strongly
                if srng.random() < 0.4:
                    symbol_severity = 0.0
                else:
                    symbol_severity = severity * float(srng.uniform(0.9, 1.5))
                trace, plog = perturb_trace(
                    trace, spec.perturbation.scaled(symbol_severity), srng
                )
                tlog.update(plog)
            traces[symbol] = trace
            entry["traces"][symbol] = tlog
        children.append(
            ChildRecord(
                child_id=child_id,
                age_months=age,
                grade=_grade_for_age(age),
                dysgraphia=bool(labels[i]),
                traces=traces,
            )
        )
        logs.append(entry)
    return SyntheticCohort(children=children, log=logs)


def write_cohort(cohort: SyntheticCohort, out_dir: str | Path) -> Path:
    """Write trace CSVs plus manifest.json; byte-stable for a fixed cohort."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    manifest = []
    for child in cohort.children:
        refs = {}
        for symbol in SYMBOLS:
            if symbol not in child.traces:
                continue
            rel = f"traces/{child.child_id}_{symbol}.csv"
            (out / rel).write_text(serialize_trace(child.traces[symbol]))
            refs[symbol] = rel
        manifest.append(
            {
                "child_id": child.child_id,
                "age_months": child.age_months,
                "grade": child.grade,
                "dysgraphia": child.dysgraphia,
                "traces": refs,
            }
        )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    (out / "generation_log.json").write_text(json.dumps(cohort.log, indent=1, sort_keys=True))
    return out / "manifest.json"
