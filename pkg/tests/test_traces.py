import json

import numpy as np
import pytest

from pomh.traces import (
    ChildRecord,
    ManifestError,
    Trace,
    TraceError,
    class_counts,
    compute_velocity,
    load_manifest,
    parse_trace,
    serialize_trace,
    snap_to_grid,
    stroke_boundaries,
    total_pen_down_time,
)


def make_csv(rows, resolution=0.25, header="t,x,y,pen"):
    lines = [f"# resolution_mm={resolution}", header]
    lines += [",".join(str(v) for v in r) for r in rows]
    return "\n".join(lines).encode()


class TestParseTrace:
    def test_four_rows(self):
        content = make_csv(
            [(0.000, 0.0, 0.0, 1), (0.005, 0.25, 0.0, 1), (0.010, 0.5, 0.25, 1), (0.015, 0.5, 0.5, 1)]
        )
        tr = parse_trace(content, "a")
        assert len(tr) == 4
        assert tr.resolution_mm == 0.25
        assert tr.x.tolist() == [0.0, 0.25, 0.5, 0.5]

    def test_non_monotone_time(self):
        content = make_csv(
            [(0.000, 0, 0, 1), (0.005, 0, 0, 1), (0.004, 0, 0, 1), (0.010, 0, 0, 1)]
        )
        with pytest.raises(TraceError, match="non-monotone timestamp at line 5"):
            parse_trace(content, "a")

    def test_snap_to_resolution(self):
        content = make_csv(
            [(0.000, 1.3, 0.0, 1), (0.005, 1.3, 0.0, 1), (0.010, 1.3, 0.0, 1), (0.015, 1.3, 0.0, 1)]
        )
        tr = parse_trace(content, "a")
        expected = round(1.3 / 0.25) * 0.25
        assert np.all(tr.x == expected)

    def test_malformed_row_reports_line(self):
        content = b"t,x,y,pen\n0.0,0.0,0.0,1\n0.005,oops,0.0,1\n"
        with pytest.raises(TraceError, match="line 3"):
            parse_trace(content, "a")

    def test_round_trip_is_bit_exact(self):
        content = make_csv(
            [(0.000, 0.0, 0.0, 1), (0.005, 0.25, 0.0, 1), (0.010, 0.5, 0.25, 0), (0.015, 0.5, 0.5, 1)]
        )
        tr = parse_trace(content, "a")
        text = serialize_trace(tr)
        assert serialize_trace(parse_trace(text.encode(), "a")) == text

    def test_snap_oracle(self):
        rng = np.random.default_rng(0)
        vals = rng.uniform(-10, 10, 200)
        snapped = snap_to_grid(vals, 0.25)
        assert np.allclose(snapped, np.round(vals / 0.25) * 0.25)


class TestTraceInvariants:
    def test_too_few_samples(self):
        with pytest.raises(TraceError):
            Trace("a", [0, 0.005, 0.01], [0, 0, 0], [0, 0, 0], [True] * 3)

    def test_sampling_rate_warning_not_error(self):
        n = 10
        with pytest.warns(UserWarning, match="sampling period"):
            Trace("a", np.arange(n) * 0.05, np.zeros(n), np.zeros(n), np.ones(n, bool))

    def test_non_finite(self):
        t = np.arange(4) / 200
        with pytest.raises(TraceError):
            Trace("a", t, [0, np.nan, 0, 0], np.zeros(4), np.ones(4, bool))


def simple_trace(x, pen=None, dt=0.005):
    n = len(x)
    pen = [True] * n if pen is None else pen
    return Trace("a", np.arange(n) * dt, np.asarray(x, float), np.zeros(n), pen)


class TestVelocity:
    def test_basic_rate(self):
        tr = simple_trace([0.0, 1.0, 2.0, 3.0])
        v = compute_velocity(tr)
        assert np.allclose(v.vx, 200.0)
        assert len(v) == 3

    def test_constant_position_zero(self):
        tr = simple_trace([1.0] * 10)
        assert np.all(compute_velocity(tr).vx == 0.0)

    def test_sine_against_central_difference_bound(self):
        # average velocity over an interval matches the derivative at the
        # interval midpoint to second order
        fs = 200.0
        t = np.arange(0, 1.0, 1 / fs)
        x = np.sin(2 * np.pi * t)
        tr = Trace("a", t, x, np.zeros_like(t), np.ones_like(t, dtype=bool), resolution_mm=1e-12)
        v = compute_velocity(tr)
        expected = 2 * np.pi * np.cos(2 * np.pi * v.t_mid)
        err = np.abs(v.vx - expected)
        assert np.all(err <= 1e-3 * np.max(np.abs(expected)))

    def test_pen_up_pairs_excluded(self):
        pen = [True, True, False, True, True]
        tr = simple_trace([0, 1, 2, 3, 4], pen)
        v = compute_velocity(tr)
        # pairs (1,2) and (2,3) span the pen-up sample
        assert len(v) == 2

    def test_stroke_count_relation(self):
        # single stroke of n samples gives n - 1 velocities
        for n in (4, 9, 17):
            tr = simple_trace(list(range(n)))
            assert len(compute_velocity(tr)) == n - 1


class TestPenDownTime:
    def test_all_down(self):
        tr = simple_trace([0, 1, 2, 3, 4], dt=0.25)
        assert total_pen_down_time(tr) == pytest.approx(1.0)

    def test_two_strokes(self):
        # 0.4 s down, 0.2 s up, 0.4 s down
        t = np.arange(12) * 0.1
        pen = [True] * 5 + [False] * 2 + [True] * 5
        tr = Trace("a", t, np.zeros(12), np.zeros(12), pen)
        assert total_pen_down_time(tr) == pytest.approx(0.8)

    def test_random_mask_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(4, 40))
            pen = rng.random(n) < 0.7
            t = np.cumsum(rng.uniform(0.004, 0.006, n))
            tr = Trace("a", t, np.zeros(n), np.zeros(n), pen)
            expected = sum(
                t[i + 1] - t[i] for i in range(n - 1) if pen[i] and pen[i + 1]
            )
            assert total_pen_down_time(tr) == pytest.approx(expected)
            assert total_pen_down_time(tr) <= t[-1] - t[0] + 1e-12

    def test_stroke_boundaries(self):
        t = np.arange(8) * 0.005
        pen = [True, True, False, False, True, True, True, False]
        tr = Trace("a", t, np.zeros(8), np.zeros(8), pen)
        assert stroke_boundaries(tr) == [t[1], t[4], t[6]]


class TestManifest:
    def write_cohort(self, tmp_path, entries):
        (tmp_path / "manifest.json").write_text(json.dumps(entries))
        return tmp_path / "manifest.json"

    def trace_file(self, tmp_path, name):
        p = tmp_path / name
        p.write_bytes(
            make_csv([(0.000, 0, 0, 1), (0.005, 0.25, 0, 1), (0.010, 0.5, 0, 1), (0.015, 0.5, 0.25, 1)])
        )
        return name

    def test_load_and_missing_symbols(self, tmp_path):
        f = self.trace_file(tmp_path, "a.csv")
        entries = [
            {"child_id": "c1", "age_months": 100, "grade": 3, "dysgraphia": False,
             "traces": {"a": f}},
            {"child_id": "c2", "age_months": 140, "grade": 6, "dysgraphia": True, "traces": {}},
        ]
        records = load_manifest(self.write_cohort(tmp_path, entries))
        assert len(records) == 2
        assert len(records[0].missing_symbols) == 35
        assert len(records[1].missing_symbols) == 36
        assert class_counts(records) == (1, 1)

    def test_dangling_reference(self, tmp_path):
        entries = [{"child_id": "c1", "age_months": 100, "grade": 3, "dysgraphia": False,
                    "traces": {"a": "nope.csv"}}]
        with pytest.raises(ManifestError, match="nope.csv"):
            load_manifest(self.write_cohort(tmp_path, entries))

    def test_duplicate_child(self, tmp_path):
        entries = [
            {"child_id": "c1", "age_months": 100, "grade": 3, "dysgraphia": False, "traces": {}},
            {"child_id": "c1", "age_months": 101, "grade": 3, "dysgraphia": False, "traces": {}},
        ]
        with pytest.raises(ManifestError, match="duplicate child_id"):
            load_manifest(self.write_cohort(tmp_path, entries))

    def test_duplicate_symbol_key(self, tmp_path):
        f = self.trace_file(tmp_path, "a.csv")
        text = (
            '[{"child_id": "c1", "age_months": 100, "grade": 3, "dysgraphia": false,'
            f' "traces": {{"a": "{f}", "a": "{f}"}}}}]'
        )
        (tmp_path / "manifest.json").write_text(text)
        with pytest.raises(ManifestError, match="duplicate key"):
            load_manifest(tmp_path / "manifest.json")

    def test_cohort_class_proportions(self, tmp_path):
        entries = [
            {"child_id": f"c{i}", "age_months": 100, "grade": 3,
             "dysgraphia": i < 66, "traces": {}}
            for i in range(545)
        ]
        records = load_manifest(self.write_cohort(tmp_path, entries))
        td, dys = class_counts(records)
        assert (td, dys) == (479, 66)
        assert round(td / 545, 2) == 0.88
        assert round(dys / 545, 2) == 0.12

    def test_grade_bounds(self):
        with pytest.raises(ManifestError):
            ChildRecord("x", 100, 0, False)
