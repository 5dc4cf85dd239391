import numpy as np
import pytest

from pomh import oscillator as osc
from pomh.synth import GeneratorSpec, smooth_trace_with_breaks
from pomh.traces import Trace, VelocitySeries, compute_velocity


def sampled_velocity(vfun, t_end, fs=200.0):
    """VelocitySeries of interval-average velocities of an analytic x(t)."""
    t = np.arange(0, t_end + 0.5 / fs, 1 / fs)
    x = vfun(t)
    vx = np.diff(x) * fs
    t_mid = (t[:-1] + t[1:]) / 2
    return t, x, VelocitySeries(t_mid, vx, np.zeros_like(vx))


class TestEstimateSegments:
    def test_half_sine_lobe_recovery(self):
        A, P = 5.0, 0.4
        pos = lambda t: (A / (np.pi / P)) * (1 - np.cos(np.pi * t / P))
        _, _, v = sampled_velocity(pos, P)
        segs = osc.estimate_segments(v, "x", [], 0.0, P)
        assert len(segs) == 1
        s = segs[0]
        assert s.a == pytest.approx(A, rel=0.01)
        assert s.omega == pytest.approx(np.pi / P)
        assert s.phi == pytest.approx(0.0)

    def test_zero_velocity_single_segment(self):
        v = VelocitySeries(np.linspace(0.0025, 0.0975, 20), np.zeros(20), np.zeros(20))
        segs = osc.estimate_segments(v, "x", [], 0.0, 0.1)
        assert len(segs) == 1
        assert segs[0].a == 0.0

    def test_two_lobes_amplitudes(self):
        P = 0.3
        def pos(t):
            # lobe of amplitude 1 on [0, P), amplitude 2 on [P, 2P)
            first = np.minimum(t, P)
            second = np.clip(t - P, 0, P)
            k = np.pi / P
            return (1.0 / k) * (1 - np.cos(k * first)) + (2.0 / k) * (1 - np.cos(k * second))
        _, _, v = sampled_velocity(pos, 2 * P)
        segs = osc.estimate_segments(v, "x", [P], 0.0, 2 * P)
        assert len(segs) == 2
        assert segs[0].a == pytest.approx(1.0, rel=0.02)
        assert segs[1].a == pytest.approx(2.0, rel=0.02)

    def test_empty_interval_amplitude_zero(self):
        v = VelocitySeries(np.array([0.9]), np.array([3.0]), np.array([0.0]))
        segs = osc.estimate_segments(v, "x", [0.5], 0.0, 1.0)
        assert segs[0].a == 0.0  # no midpoint falls in [0, 0.5)

    def test_phase_zero_at_segment_start(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            t0 = rng.uniform(0, 2)
            t1 = t0 + rng.uniform(0.05, 1.0)
            v = VelocitySeries(np.linspace(t0, t1, 9), rng.normal(size=9), np.zeros(9))
            for s in osc.estimate_segments(v, "x", [], t0, t1):
                assert abs(np.sin(s.omega * s.t_start + s.phi)) < 1e-9


def model_exact_fit(seed, n_lobes_hint=120):
    """Noiseless, unquantized trace plus a fit built from the true breaks."""
    spec = GeneratorSpec(seed=seed, noise_sd=0.0, resolution_mm=1e-9)
    rng = np.random.default_rng(seed)
    trace, bx, by = smooth_trace_with_breaks(spec, "a", rng, age_months=n_lobes_hint)
    v = compute_velocity(trace)
    ax = osc.build_axis_model(v.t_mid, v.vx, bx[1:-1], trace.t[0], trace.t[-1], trace.t, trace.x)
    ay = osc.build_axis_model(v.t_mid, v.vy, by[1:-1], trace.t[0], trace.t[-1], trace.t, trace.y)
    return trace, ax, ay


class TestReconstruction:
    def test_exact_model_recovery(self):
        for seed in range(10):
            trace, ax, ay = model_exact_fit(seed)
            x_hat = ax.position_at(trace.t)
            y_hat = ay.position_at(trace.t)
            l2 = osc.distance(trace.x, trace.y, x_hat, y_hat, "L2").value
            assert l2 < 1e-3, f"seed {seed}: L2={l2}"

    def test_velocity_vanishes_at_breaks(self):
        trace, ax, _ = model_exact_fit(3)
        peak = np.max(np.abs(ax.a))
        v_at_breaks = np.abs(ax.velocity_at(ax.breaks))
        assert np.all(v_at_breaks < 1e-9 * peak)

    def test_constant_trace_reconstructs_exactly(self):
        n = 50
        t = np.arange(n) / 200
        tr = Trace("a", t, np.full(n, 1.25), np.full(n, 0.5), np.ones(n, bool))
        fit = osc.fit_pomh(tr, 3, 3)
        assert fit.distances["L2"] == 0.0
        assert np.all(fit.x_hat == 1.25)

    def test_anchoring_prevents_drift(self):
        # reconstruction error stays bounded by per-segment errors even over
        # many segments
        trace, ax, ay = model_exact_fit(7)
        err = np.abs(ax.position_at(trace.t) - trace.x)
        assert err.max() < 1e-6


class TestDistance:
    def test_identical_traces(self):
        x = np.arange(5.0)
        for kind in osc.DISTANCE_KINDS:
            assert osc.distance(x, x, x, x, kind).value == 0.0

    def test_constant_offset_three_four(self):
        n = 17
        x = np.zeros(n)
        y = np.zeros(n)
        d1 = osc.distance(x, y, x + 3, y + 4, "L1")
        d2 = osc.distance(x, y, x + 3, y + 4, "L2")
        dinf = osc.distance(x, y, x + 3, y + 4, "Linf")
        assert (d1.value, d2.value, dinf.value) == (7.0, 5.0, 4.0)
        assert d1.n_points == n

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            osc.distance(np.zeros(3), np.zeros(3), np.zeros(4), np.zeros(4), "L1")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            osc.distance(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), "L3")

    def test_ordering_and_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            ox, oy = rng.normal(size=(2, n))
            rx, ry = rng.normal(size=(2, n))
            d1 = osc.distance(ox, oy, rx, ry, "L1").value
            d2 = osc.distance(ox, oy, rx, ry, "L2").value
            dinf = osc.distance(ox, oy, rx, ry, "Linf").value
            assert dinf <= d2 + 1e-12 and d2 <= d1 + 1e-12
            # direct summation oracle
            s1 = sum(abs(a - b) + abs(c - d) for a, b, c, d in zip(ox, rx, oy, ry)) / n
            assert d1 == pytest.approx(s1, rel=1e-12)


class TestFitPomh:
    def test_monotone_median_l2_in_w(self):
        spec = GeneratorSpec(seed=9)
        rng = np.random.default_rng(9)
        traces = [
            smooth_trace_with_breaks(spec, s, rng, age_months=96)[0]
            for s in "abcdmns03"
        ]
        med = []
        for w in (3, 9, 17, 25):
            med.append(np.median([osc.fit_pomh(tr, w, w).distances["L2"] for tr in traces]))
        assert all(a <= b + 1e-12 for a, b in zip(med, med[1:]))

    def test_segments_tile_span(self):
        spec = GeneratorSpec(seed=2)
        tr = smooth_trace_with_breaks(spec, "b", np.random.default_rng(2), 120)[0]
        fit = osc.fit_pomh(tr, 7, 7)
        for model in (fit.axis_x, fit.axis_y):
            assert model.breaks[0] == tr.t[0]
            assert model.breaks[-1] == tr.t[-1]
            assert np.all(np.diff(model.breaks) > 0)

    def test_reconstruction_csv_shape(self):
        spec = GeneratorSpec(seed=2)
        tr = smooth_trace_with_breaks(spec, "b", np.random.default_rng(2), 120)[0]
        fit = osc.fit_pomh(tr, 5, 5)
        csv = osc.reconstruction_csv(tr, fit)
        lines = csv.strip().split("\n")
        assert lines[0] == "t,x,y,x_hat,y_hat"
        assert len(lines) == len(tr) + 1
