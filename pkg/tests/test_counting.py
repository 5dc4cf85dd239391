import numpy as np
import pytest

from pomh.classifiers.counting import (
    child_score,
    counting_threshold,
    positive_symbols,
    quantile_threshold,
)


class TestQuantile:
    def test_order_statistic_rule(self):
        p = np.arange(0.1, 1.05, 0.1)  # 0.1 .. 1.0
        assert quantile_threshold(p, 0.89) == pytest.approx(0.9)  # 9th of 10

    def test_alpha_near_zero_takes_smallest(self):
        p = np.array([0.4, 0.1, 0.9])
        assert quantile_threshold(p, 1e-9) == pytest.approx(0.1)

    def test_alpha_near_one(self):
        p = np.array([0.4, 0.1, 0.9])
        assert quantile_threshold(p, 0.999) == pytest.approx(0.9)

    def test_matches_ceil_rank_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 50))
            p = rng.random(n)
            alpha = float(rng.uniform(0.01, 0.99))
            rank = int(np.ceil(alpha * n))
            expected = np.sort(p)[min(max(rank, 1), n) - 1]
            assert quantile_threshold(p, alpha) == expected


class TestCounting:
    def test_invalid_alpha(self):
        with pytest.raises(ValueError):
            counting_threshold({"a": np.array([0.5])}, 1.0)

    def test_positive_iff_geq_threshold(self):
        params = counting_threshold({"a": np.array([0.2, 0.4, 0.6])}, 0.5)
        assert params.thresholds["a"] == pytest.approx(0.4)
        assert positive_symbols(params, {"a": 0.4}) == 1
        assert positive_symbols(params, {"a": 0.39}) == 0

    def test_child_score_is_fraction_of_written(self):
        train = {s: np.linspace(0, 1, 11) for s in "abc"}
        params = counting_threshold(train, 0.5)
        probs = {"a": 1.0, "b": 0.0, "c": 1.0}
        assert child_score(params, probs) == pytest.approx(2 / 3)

    def test_positive_fraction_bounded(self):
        # fraction of training rows marked positive at level alpha is at most
        # 1 - alpha + 1/n
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(2, 60))
            p = rng.random(n)
            alpha = float(rng.uniform(0.05, 0.95))
            t = quantile_threshold(p, alpha)
            frac = np.mean(p >= t)
            assert frac <= 1 - alpha + 1 / n + 1e-12

    def test_empty_child_rejected(self):
        params = counting_threshold({"a": np.array([0.5])}, 0.5)
        with pytest.raises(ValueError):
            child_score(params, {})
