import numpy as np
import pytest

from pomh.features import (
    DichotomizedRow,
    FeatureRow,
    SymbolStats,
    cohort_missing_summary,
    compute_training_stats,
    dichotomize,
    encode_rows,
    feature_table_csv,
    predictor_matrix,
)
from pomh.traces import ChildRecord


def row(cid="c1", symbol="a", wx=7, dist=0.2, tt=0.8, grade=3, label=False, wy=9):
    return FeatureRow(
        child_id=cid, symbol=symbol, w_hat_x=wx, w_hat_y=wy,
        saturated_x=False, saturated_y=False,
        dist=dist, total_time=tt, grade=grade, label=label,
    )


def training_rows():
    rng = np.random.default_rng(0)
    rows = []
    for i in range(40):
        rows.append(
            row(
                cid=f"c{i}", wx=int(rng.choice([3, 5, 7, 9, 11])),
                dist=float(rng.uniform(0.05, 0.6)),
                tt=float(rng.uniform(0.4, 1.6)),
                grade=int(rng.integers(1, 10)),
                label=bool(rng.random() < 0.2),
            )
        )
    return rows


class TestDichotomize:
    def test_grade_cycles(self):
        stats = {"a": SymbolStats(7, 1.0, 0.2, 0.1)}
        d3 = dichotomize([row(grade=3)], stats)[0]
        d7 = dichotomize([row(grade=7)], stats)[0]
        d4 = dichotomize([row(grade=4)], stats)[0]
        assert d3.gr_sec == "cycle1" and d4.gr_sec == "cycle1" and d7.gr_sec == "cycle2"

    def test_wx_tie_goes_small(self):
        stats = {"a": SymbolStats(7, 1.0, 0.2, 0.1)}
        assert dichotomize([row(wx=7)], stats)[0].gr_wx == "small"
        assert dichotomize([row(wx=9)], stats)[0].gr_wx == "large"

    def test_time_at_mean_is_fast(self):
        stats = {"a": SymbolStats(7, 1.0, 0.2, 0.1)}
        assert dichotomize([row(tt=1.0)], stats)[0].gr_slow == "fast"
        assert dichotomize([row(tt=1.0001)], stats)[0].gr_slow == "slow"

    def test_dist_at_mean_is_zero(self):
        stats = {"a": SymbolStats(7, 1.0, 0.2, 0.1)}
        assert dichotomize([row(dist=0.2)], stats)[0].dist_norm == 0.0

    def test_zero_sd_warns(self):
        stats = {"a": SymbolStats(7, 1.0, 0.2, 0.0)}
        with pytest.warns(UserWarning, match="zero distance spread"):
            d = dichotomize([row(dist=0.7)], stats)[0]
        assert d.dist_norm == 0.0

    def test_standardization_on_training_fold(self):
        rows = training_rows()
        stats = compute_training_stats(rows)
        d = dichotomize(rows, stats)
        z = np.array([r.dist_norm for r in d])
        assert abs(z.mean()) < 1e-9
        assert abs(z.std(ddof=1) - 1.0) < 1e-9

    def test_positive_scaling_invariance(self):
        rows = training_rows()
        stats = compute_training_stats(rows)
        d1 = dichotomize(rows, stats)
        scaled = [
            FeatureRow(r.child_id, r.symbol, r.w_hat_x, r.w_hat_y, r.saturated_x,
                       r.saturated_y, r.dist * 3.7, r.total_time, r.grade, r.label)
            for r in rows
        ]
        d2 = dichotomize(scaled, compute_training_stats(scaled))
        for a, b in zip(d1, d2):
            assert (a.gr_sec, a.gr_wx, a.gr_slow) == (b.gr_sec, b.gr_wx, b.gr_slow)
            assert a.dist_norm == pytest.approx(b.dist_norm, abs=1e-9)

    def test_no_leakage_from_test_rows(self):
        train = training_rows()
        stats = compute_training_stats(train)
        test_row = row(cid="test", dist=99.0, tt=99.0, wx=11)
        d_before = dichotomize([test_row], stats)[0]
        # recompute stats with the test row mutated; training stats unchanged
        stats_again = compute_training_stats(train)
        assert stats == stats_again
        assert dichotomize([test_row], stats_again)[0] == d_before


class TestEncoding:
    def test_levels_binary(self):
        d = DichotomizedRow("c", "a", 0.5, "cycle2", "small", "slow", True)
        data, y = encode_rows([d])
        assert data["gr_sec"][0] == 1.0
        assert data["gr_wx"][0] == 0.0
        assert data["gr_slow"][0] == 1.0
        assert y[0] == 1

    def test_predictor_matrix_columns(self):
        X = predictor_matrix([row(wx=7, dist=0.2, tt=0.8, grade=3, wy=9)])
        assert X.tolist() == [[0.2, 3.0, 0.8, 7.0, 9.0]]


class TestTableAndAudit:
    def test_csv_column_order(self):
        csv = feature_table_csv([row()])
        header = csv.splitlines()[0].split(",")
        assert header[:7] == [
            "child_id", "symbol", "w_hat_x", "dist", "total_time", "section", "dysgraphia",
        ]
        assert header[7:] == ["w_hat_y", "saturated_x", "saturated_y"]

    def test_missing_rate_fixture(self):
        children = []
        # 479 TD: 363 complete, 116 with one missing symbol
        for i in range(479):
            c = ChildRecord(f"td{i}", 100, 3, False)
            c.traces = {s: object() for s in "abcdefghijklmnopqrstuvwxyz0123456789"}
            if i < 116:
                del c.traces["a"]
            children.append(c)
        # 66 dysgraphia: 42 complete, 24 incomplete
        for i in range(66):
            c = ChildRecord(f"dg{i}", 100, 3, True)
            c.traces = {s: object() for s in "abcdefghijklmnopqrstuvwxyz0123456789"}
            if i < 24:
                del c.traces["q"]
            children.append(c)
        summary = cohort_missing_summary(children)
        assert summary["td"]["complete"] == 363
        assert summary["td"]["incomplete"] == 116
        assert round(summary["td"]["missing_rate"], 3) == 0.242
        assert summary["dysgraphia"]["complete"] == 42
        assert round(summary["dysgraphia"]["missing_rate"], 3) == 0.364

    def test_rows_per_child_counts(self):
        # a complete child yields 36 rows, one per symbol; missing symbols
        # yield no row (exercised through build_feature_row's None contract)
        from pomh.features import build_feature_row

        c = ChildRecord("c9", 100, 3, False)
        assert build_feature_row(c, "a", None, None, "L2") is None
