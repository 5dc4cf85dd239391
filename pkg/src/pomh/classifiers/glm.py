"""Logistic regression via iteratively reweighted least squares, with
stepwise term selection by information criterion.

Terms are tuples of column names; a term's design column is the elementwise
product of its columns (binary factors enter as 0/1). Selection follows the
usual stepwise discipline: candidate drops are terms not contained in any
retained higher-order term, candidate adds are scope terms whose sub-terms
(within scope) are already present, and a move is taken only when it lowers
the criterion.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

Term = tuple[str, ...]

# main effects, the dist_norm two-way interactions, and the three
# dist_norm three-way interactions used by the symbol-level logistic layer
FIRST_LAYER_SCOPE: list[Term] = [
    ("dist_norm",),
    ("gr_sec",),
    ("gr_wx",),
    ("gr_slow",),
    ("dist_norm", "gr_wx"),
    ("dist_norm", "gr_sec"),
    ("dist_norm", "gr_slow"),
    ("dist_norm", "gr_slow", "gr_wx"),
    ("dist_norm", "gr_slow", "gr_sec"),
    ("dist_norm", "gr_sec", "gr_wx"),
]

COEF_CLIP = 30.0
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50


def logistic(eta):
    eta = np.clip(eta, -500, 500)
    return 1.0 / (1.0 + np.exp(-eta))


def design_matrix(data: dict[str, np.ndarray], terms: list[Term]) -> np.ndarray:
    n = len(next(iter(data.values())))
    cols = [np.ones(n)]
    for term in terms:
        col = np.ones(n)
        for name in term:
            col = col * np.asarray(data[name], dtype=np.float64)
        cols.append(col)
    return np.column_stack(cols)


@dataclass
class IrlsFit:
    beta: np.ndarray  # intercept first
    log_likelihood: float
    aic: float
    criterion: float
    n_iter: int
    converged: bool
    separation: bool


def _log_likelihood(y, p):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(np.sum(y * np.log(p) + (1 - y) * np.log(1 - p)))


def irls(X: np.ndarray, y: np.ndarray, k_penalty: float = 2.0) -> IrlsFit:
    n, p = X.shape
    beta = np.zeros(p)
    ll = _log_likelihood(y, np.full(n, 0.5))
    converged = False
    separation = False
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        mu = logistic(X @ beta)
        w = np.clip(mu * (1 - mu), 1e-10, None)
        grad = X.T @ (y - mu)
        hess = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(beta)) > COEF_CLIP:
            separation = True
            beta = np.clip(beta, -COEF_CLIP, COEF_CLIP)
            warnings.warn(
                "apparent complete separation: coefficients clipped", stacklevel=2
            )
            ll = _log_likelihood(y, logistic(X @ beta))
            break
        new_ll = _log_likelihood(y, logistic(X @ beta))
        if abs(new_ll - ll) < IRLS_TOL * (abs(ll) + IRLS_TOL):
            ll = new_ll
            converged = True
            break
        ll = new_ll
    aic = 2 * p - 2 * ll
    return IrlsFit(
        beta=beta,
        log_likelihood=ll,
        aic=aic,
        criterion=k_penalty * p - 2 * ll,
        n_iter=it,
        converged=converged,
        separation=separation,
    )


@dataclass
class GlmModel:
    scope: list[Term]
    selected: list[Term]
    theta: np.ndarray  # intercept followed by one slot per scope term (0 if unselected)
    aic: float
    separation: bool = False
    selection: str = "aic"
    history: list[str] = field(default_factory=list)

    def coefficient(self, term: Term) -> float:
        return float(self.theta[1 + self.scope.index(term)])

    def predict(self, data: dict[str, np.ndarray]) -> np.ndarray:
        X = design_matrix(data, self.scope)
        return logistic(X @ self.theta)


def _droppable(model_terms: list[Term]) -> list[Term]:
    out = []
    for t in model_terms:
        if not any(set(t) < set(u) for u in model_terms if u != t):
            out.append(t)
    return out


def _addable(model_terms: list[Term], scope: list[Term]) -> list[Term]:
    present = set(model_terms)
    out = []
    for t in scope:
        if t in present:
            continue
        subs = [u for u in scope if set(u) < set(t)]
        if all(u in present for u in subs):
            out.append(t)
    return out


def glm_fit(
    data: dict[str, np.ndarray],
    y: np.ndarray,
    scope: list[Term] | None = None,
    selection: str = "aic",
    direction: str = "both",
) -> GlmModel:
    """Fit the full-scope model, then stepwise-select terms.

    selection: 'aic' (penalty 2), 'bic' (penalty log n), or 'stepwise'
    (alias for the default AIC walk). direction: 'both' or 'backward'.
    """
    scope = list(FIRST_LAYER_SCOPE if scope is None else scope)
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise ValueError("glm_fit needs rows from both classes")
    n = y.size
    if selection in ("aic", "stepwise"):
        k_penalty = 2.0
    elif selection == "bic":
        k_penalty = float(np.log(n))
    else:
        raise ValueError(f"unknown selection mode {selection!r}")
    if direction not in ("both", "backward"):
        raise ValueError(f"unknown direction {direction!r}")

    current = list(scope)
    fit = irls(design_matrix(data, current), y, k_penalty)
    history = [f"start: criterion={fit.criterion:.3f} terms={len(current)}"]
    while True:
        moves: list[tuple[float, str, list[Term]]] = []
        for t in _droppable(current):
            trial = [u for u in current if u != t]
            f = irls(design_matrix(data, trial), y, k_penalty)
            moves.append((f.criterion, f"- {':'.join(t)}", trial))
        if direction == "both":
            for t in _addable(current, scope):
                trial = current + [t]
                f = irls(design_matrix(data, trial), y, k_penalty)
                moves.append((f.criterion, f"+ {':'.join(t)}", trial))
        if not moves:
            break
        best = min(moves, key=lambda m: m[0])
        if best[0] < fit.criterion - 1e-10:
            current = best[2]
            fit = irls(design_matrix(data, current), y, k_penalty)
            history.append(f"{best[1]}: criterion={fit.criterion:.3f}")
        else:
            break

    theta = np.zeros(1 + len(scope))
    theta[0] = fit.beta[0]
    for i, t in enumerate(current):
        theta[1 + scope.index(t)] = fit.beta[1 + i]
    return GlmModel(
        scope=scope,
        selected=[t for t in scope if t in current],
        theta=theta,
        aic=fit.aic,
        separation=fit.separation,
        selection=selection,
        history=history,
    )


def glm_predict(model: GlmModel, data: dict[str, np.ndarray]) -> np.ndarray:
    return model.predict(data)
