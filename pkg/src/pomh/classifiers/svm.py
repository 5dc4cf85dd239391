"""Soft-margin RBF support vector machine solved by pairwise (SMO-style)
dual optimization, with per-class cost weighting and a power-of-two
hyperparameter grid searched by inner stratified cross-validation.

Predictors are z-scored with training statistics. Class weights are
inversely proportional to class frequency (w_c = n / (2 n_c)), so the box
constraint for row i is C * w_{y_i}. Output is the binary decision only;
a decision value of exactly zero maps to the negative class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA_GRID = tuple(2.0**k for k in range(-10, -1))  # 2^-10 .. 2^-2
C_GRID = tuple(2.0**k for k in range(5, 11))  # 2^5 .. 2^10
KKT_TOL = 1e-3
MAX_PASSES = 200_000


class SvmConvergenceError(RuntimeError):
    pass


def _rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    a2 = np.sum(A * A, axis=1)[:, None]
    b2 = np.sum(B * B, axis=1)[None, :]
    d2 = np.maximum(a2 + b2 - 2.0 * (A @ B.T), 0.0)
    return np.exp(-gamma * d2)


@dataclass
class _DualSolution:
    alpha: np.ndarray
    bias: float
    n_iter: int


def _smo_solve(K: np.ndarray, y: np.ndarray, C_i: np.ndarray, tol: float) -> _DualSolution:
    """Maximal-violating-pair SMO on the dual with per-row box constraints.

    y in {-1, +1}. Gradient of the dual objective (minimization form) is
    g_i = y_i * f_i - 1 with f_i = sum_j alpha_j y_j K_ij.
    """
    n = y.size
    alpha = np.zeros(n)
    f = np.zeros(n)  # sum_j alpha_j y_j K_ij
    it = 0
    while True:
        it += 1
        if it > MAX_PASSES:
            raise SvmConvergenceError(
                f"SMO did not reach tolerance {tol} within {MAX_PASSES} pair updates"
            )
        grad = y * f - 1.0  # d/dalpha_i
        up = (y > 0) & (alpha < C_i) | (y < 0) & (alpha > 0)
        low = (y > 0) & (alpha > 0) | (y < 0) & (alpha < C_i)
        minus_yg = -y * grad
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(minus_yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(minus_yg[low])])
        gap = minus_yg[i] - minus_yg[j]
        if gap <= tol:
            break
        # solve the 2-variable subproblem for (i, j)
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        eta = max(eta, 1e-12)
        delta = gap / eta  # step along (y_i e_i - y_j e_j)
        ai, aj = alpha[i], alpha[j]
        if y[i] > 0:
            delta = min(delta, C_i[i] - ai)
        else:
            delta = min(delta, ai)
        if y[j] > 0:
            delta = min(delta, aj)
        else:
            delta = min(delta, C_i[j] - aj)
        alpha[i] = ai + y[i] * delta
        alpha[j] = aj - y[j] * delta
        f += delta * (K[:, i] - K[:, j])
    # bias from the violating-pair bounds (midpoint rule)
    grad = y * f - 1.0
    minus_yg = -y * grad
    up = (y > 0) & (alpha < C_i) | (y < 0) & (alpha > 0)
    low = (y > 0) & (alpha > 0) | (y < 0) & (alpha < C_i)
    hi = minus_yg[up].max() if up.any() else 0.0
    lo = minus_yg[low].min() if low.any() else 0.0
    bias = (hi + lo) / 2.0
    return _DualSolution(alpha=alpha, bias=bias, n_iter=it)


@dataclass
class SvmModel:
    support_X: np.ndarray  # scaled
    support_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    class_weights: dict[int, float]
    scale_mean: np.ndarray
    scale_std: np.ndarray
    inner_cv_error: float
    inner_cv_train_pred: np.ndarray  # binary votes for the training rows
    n_iter: int
    train_alpha: np.ndarray | None = None  # full alpha vector, for KKT audits

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.scale_mean) / self.scale_std
        K = _rbf_matrix(Z, self.support_X, self.gamma)
        return K @ self.support_coef + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)


def _class_weights(y01: np.ndarray) -> dict[int, float]:
    n = y01.size
    out = {}
    for c in (0, 1):
        nc = int(np.sum(y01 == c))
        out[c] = n / (2.0 * nc) if nc else 1.0
    return out


def _fit_scaled(Z, y01, gamma, C, weights, tol=KKT_TOL):
    y = np.where(y01 == 1, 1.0, -1.0)
    C_i = C * np.array([weights[int(c)] for c in y01])
    K = _rbf_matrix(Z, Z, gamma)
    sol = _smo_solve(K, y, C_i, tol)
    return sol, y, C_i, K


def _stratified_folds(y01: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    fold = np.empty(y01.size, dtype=np.int64)
    for c in (0, 1):
        idx = np.flatnonzero(y01 == c)
        idx = idx[rng.permutation(idx.size)]
        for f in range(k):
            fold[idx[f::k]] = f
    return fold


def svm_fit(
    X: np.ndarray,
    y: np.ndarray,
    gamma_grid=GAMMA_GRID,
    C_grid=C_GRID,
    inner_cv_folds: int = 5,
    seed: int = 0,
    tol: float = KKT_TOL,
) -> SvmModel:
    """Grid-search (gamma, C) by inner stratified CV, then fit on all rows.

    The inner-CV predictions at the winning cell double as honest binary
    votes for the training rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y01 = np.asarray(y, dtype=np.int64)
    if len(np.unique(y01)) < 2:
        raise ValueError("svm_fit needs rows from both classes")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    Z = (X - mean) / std
    weights = _class_weights(y01)
    rng = np.random.default_rng(seed)
    k = min(inner_cv_folds, int(np.min(np.bincount(y01))))
    fold = _stratified_folds(y01, k, rng)

    best = None  # (error, gamma, C, preds)
    for gamma in gamma_grid:
        K_full = _rbf_matrix(Z, Z, gamma)
        for C in C_grid:
            preds = np.empty(y01.size, dtype=np.int64)
            for f in range(k):
                tr = fold != f
                te = ~tr
                ytr = np.where(y01[tr] == 1, 1.0, -1.0)
                C_i = C * np.array([weights[int(c)] for c in y01[tr]])
                sol = _smo_solve(K_full[np.ix_(tr, tr)], ytr, C_i, tol)
                dec = K_full[np.ix_(te, tr)] @ (sol.alpha * ytr) + sol.bias
                preds[te] = (dec > 0).astype(np.int64)
            err = float(np.mean(preds != y01))
            if best is None or err < best[0]:
                best = (err, gamma, C, preds.copy())
    err, gamma, C, inner_preds = best
    sol, ysign, C_i, _ = _fit_scaled(Z, y01, gamma, C, weights, tol)
    sv = sol.alpha > 0
    return SvmModel(
        support_X=Z[sv],
        support_coef=(sol.alpha * ysign)[sv],
        bias=sol.bias,
        gamma=gamma,
        C=C,
        class_weights=weights,
        scale_mean=mean,
        scale_std=std,
        inner_cv_error=err,
        inner_cv_train_pred=inner_preds,
        n_iter=sol.n_iter,
        train_alpha=sol.alpha,
    )


def svm_predict(model: SvmModel, X: np.ndarray) -> np.ndarray:
    return model.predict(X)


def kkt_violation(model: SvmModel, X: np.ndarray, y: np.ndarray) -> float:
    """Largest KKT residual over the training rows (X, y must be the data the
    model was fitted on).

    alpha = 0       requires y * f >= 1, residual max(0, 1 - y f)
    0 < alpha < C_i requires y * f  = 1, residual |1 - y f|
    alpha = C_i     requires y * f <= 1, residual max(0, y f - 1)
    """
    if model.train_alpha is None:
        raise ValueError("model has no stored training alphas")
    y01 = np.asarray(y, dtype=np.int64)
    if y01.size != model.train_alpha.size:
        raise ValueError("X/y do not match the training data the model stored")
    ysign = np.where(y01 == 1, 1.0, -1.0)
    f = model.decision_function(X)
    alpha = model.train_alpha
    C_i = model.C * np.array([model.class_weights[int(c)] for c in y01])
    margin = ysign * f
    res_free = np.abs(1.0 - margin)
    res_zero = np.maximum(0.0, 1.0 - margin)
    res_bound = np.maximum(0.0, margin - 1.0)
    at_zero = alpha <= 1e-12
    at_bound = alpha >= C_i - 1e-9
    res = np.where(at_zero, res_zero, np.where(at_bound, res_bound, res_free))
    return float(res.max())
