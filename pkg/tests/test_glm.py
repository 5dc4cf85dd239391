import numpy as np
import pytest

from pomh.classifiers.glm import (
    FIRST_LAYER_SCOPE,
    design_matrix,
    glm_fit,
    glm_predict,
    irls,
    logistic,
)


def simulate(n, theta_dist=2.0, seed=0, noise_col=False):
    rng = np.random.default_rng(seed)
    data = {
        "dist_norm": rng.normal(0, 1, n),
        "gr_sec": rng.integers(0, 2, n).astype(float),
        "gr_wx": rng.integers(0, 2, n).astype(float),
        "gr_slow": rng.integers(0, 2, n).astype(float),
    }
    if noise_col:
        data["noise"] = rng.normal(0, 1, n)
    y = (rng.random(n) < logistic(theta_dist * data["dist_norm"])).astype(float)
    return data, y


class TestLogistic:
    def test_at_zero(self):
        assert logistic(0.0) == 0.5

    def test_at_log_three(self):
        assert logistic(np.log(3.0)) == pytest.approx(0.75)

    def test_monotone_in_eta(self):
        eta = np.linspace(-6, 6, 101)
        assert np.all(np.diff(logistic(eta)) > 0)


class TestIrls:
    def test_recovers_known_coefficients(self):
        data, y = simulate(5000, 2.0, seed=1)
        X = design_matrix({"dist_norm": data["dist_norm"]}, [("dist_norm",)])
        fit = irls(X, y)
        assert fit.converged
        assert abs(fit.beta[0]) < 0.2
        assert 1.8 <= fit.beta[1] <= 2.2

    def test_all_zero_model_predicts_half(self):
        data, y = simulate(200, 0.0, seed=2)
        model = glm_fit(data, y, scope=[("dist_norm",)])
        model.theta[:] = 0.0
        p = model.predict(data)
        assert np.all(p == 0.5)

    def test_separation_clips_and_warns(self):
        x = np.r_[np.zeros(20) - 2.0, np.ones(20) * 2.0]
        y = np.r_[np.zeros(20), np.ones(20)]
        with pytest.warns(UserWarning, match="separation"):
            fit = irls(design_matrix({"x": x}, [("x",)]), y)
        assert fit.separation
        assert np.max(np.abs(fit.beta)) <= 30.0


class TestStepwise:
    def test_single_class_rejected(self):
        data, _ = simulate(50, seed=3)
        with pytest.raises(ValueError, match="both classes"):
            glm_fit(data, np.zeros(50))

    def test_noise_covariate_dropped(self):
        dropped = 0
        for rep in range(50):
            data, y = simulate(600, 2.0, seed=100 + rep, noise_col=True)
            model = glm_fit(data, y, scope=[("dist_norm",), ("noise",)])
            if ("noise",) not in model.selected:
                dropped += 1
        assert dropped >= 40  # 80% of replicates

    def test_signal_term_kept_and_recovered(self):
        data, y = simulate(5000, 2.0, seed=4)
        model = glm_fit(data, y)
        assert ("dist_norm",) in model.selected
        assert 1.8 <= model.coefficient(("dist_norm",)) <= 2.2

    def test_stepwise_never_increases_criterion(self):
        data, y = simulate(400, 1.0, seed=5)
        full = irls(design_matrix(data, FIRST_LAYER_SCOPE), y)
        model = glm_fit(data, y)
        assert model.aic <= full.aic + 1e-9

    def test_unselected_terms_zero(self):
        data, y = simulate(600, 2.0, seed=6, noise_col=True)
        model = glm_fit(data, y, scope=[("dist_norm",), ("noise",)])
        for term in model.scope:
            if term not in model.selected:
                assert model.coefficient(term) == 0.0

    def test_marginality_of_candidate_moves(self):
        from pomh.classifiers.glm import _addable, _droppable

        model_terms = [
            ("dist_norm",), ("gr_wx",), ("dist_norm", "gr_wx"),
            ("dist_norm", "gr_slow", "gr_wx"),
        ]
        drops = _droppable(model_terms)
        # nothing nested inside a retained higher-order term may be dropped
        assert ("dist_norm",) not in drops
        assert ("dist_norm", "gr_wx") not in drops
        assert ("dist_norm", "gr_slow", "gr_wx") in drops
        adds = _addable(model_terms, FIRST_LAYER_SCOPE)
        # a three-way interaction is addable only once its two-way parts are in
        assert ("dist_norm", "gr_slow", "gr_wx") not in adds  # already present
        assert ("dist_norm", "gr_sec", "gr_wx") not in adds  # dist:sec missing
        assert ("gr_sec",) in adds and ("gr_slow",) in adds

    def test_backward_direction_only_drops(self):
        data, y = simulate(500, 1.5, seed=8)
        scope = [("dist_norm",), ("gr_sec",), ("gr_wx",)]
        model = glm_fit(data, y, scope=scope, direction="backward")
        assert set(model.selected) <= set(scope)

    def test_bic_at_least_as_sparse_as_aic(self):
        sizes = []
        for mode in ("aic", "bic"):
            data, y = simulate(2000, 1.0, seed=9)
            model = glm_fit(data, y, selection=mode)
            sizes.append(len(model.selected))
        assert sizes[1] <= sizes[0]

    def test_rescaling_invariance(self):
        data, y = simulate(800, 1.5, seed=10)
        m1 = glm_fit(data, y)
        scaled = dict(data)
        scaled["dist_norm"] = data["dist_norm"] * 4.0
        m2 = glm_fit(scaled, y)
        p1 = m1.predict(data)
        p2 = m2.predict(scaled)
        assert np.allclose(p1, p2, atol=1e-6)
        if ("dist_norm",) in m1.selected and ("dist_norm",) in m2.selected:
            assert m2.coefficient(("dist_norm",)) == pytest.approx(
                m1.coefficient(("dist_norm",)) / 4.0, rel=1e-4
            )


class TestPredict:
    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(11)
        data, y = simulate(300, 1.0, seed=11)
        model = glm_fit(data, y)
        p = glm_predict(model, data)
        X = design_matrix(data, model.scope)
        expected = 1 / (1 + np.exp(-(X @ model.theta)))
        assert np.allclose(p, expected)
        assert np.all((p >= 0) & (p <= 1))

    def test_increasing_in_eta(self):
        data, y = simulate(300, 2.0, seed=12)
        model = glm_fit(data, y, scope=[("dist_norm",)])
        grid = {"dist_norm": np.linspace(-3, 3, 50)}
        p = model.predict(grid)
        if model.coefficient(("dist_norm",)) > 0:
            assert np.all(np.diff(p) >= 0)
