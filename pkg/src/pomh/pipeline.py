"""Two-layer evaluation: stratified folds, per-symbol first layer, child-level
second layer, ROC/AUC, and the (w_max, distance, alpha) sweep.

Every training-fold artifact (reference table, dichotomization statistics,
per-symbol models, counting thresholds) is built strictly from training-fold
children; fold task results merge by key so parallel scheduling cannot
change any number. Seeds derive from one master seed via spawn keys.
"""

from __future__ import annotations

import hashlib
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pomh import features as F
from pomh import oscillator, reference
from pomh.classifiers import counting, forest, glm, svm
from pomh.traces import SYMBOLS, ChildRecord, compute_velocity, total_pen_down_time

FIRST_LAYERS = ("GLM", "RF", "SVM")
SECOND_LAYERS = ("Counting", "GLM", "RF")
# the five supported layer combinations
VALID_PAIRS = frozenset(
    [("GLM", "Counting"), ("GLM", "GLM"), ("RF", "Counting"), ("RF", "RF"), ("SVM", "Counting")]
)

DIST_REPORT_NAMES = {"L1": "dist1", "L2": "dist2", "Linf": "distinf"}

DEFAULT_W_MAX_GRID = tuple(range(23, 41, 2))  # 23, 25, ..., 39
DEFAULT_ALPHA_GRID = (0.50, 0.60, 0.70, 0.80, 0.85, 0.89, 0.92, 0.95)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    first_layer: str = "RF"
    second_layer: str = "Counting"
    w_max_grid: tuple[int, ...] = DEFAULT_W_MAX_GRID
    dist_kinds: tuple[str, ...] = ("L1", "L2", "Linf")
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    folds: int = 5
    seed: int = 0
    jobs: int = 1
    selection: str = "aic"  # aic | bic | stepwise
    n_trees: int = 500
    mtry_first: int = 2
    mtry_second: int = 6
    keep_incomplete: bool = True  # counting layer keeps children with missing symbols
    audit_hashes: bool = False

    def __post_init__(self):
        if (self.first_layer, self.second_layer) not in VALID_PAIRS:
            supported = ", ".join(f"{a}->{b}" for a, b in sorted(VALID_PAIRS))
            raise ConfigError(
                f"unsupported layer combination {self.first_layer}->{self.second_layer}; "
                f"supported combinations: {supported}"
            )
        if not self.w_max_grid or not self.dist_kinds:
            raise ConfigError("w_max_grid and dist_kinds must be nonempty")
        for w in self.w_max_grid:
            if w < 3 or w % 2 == 0:
                raise ConfigError(f"w_max values must be odd and >= 3, got {w}")
        for d in self.dist_kinds:
            if d not in oscillator.DISTANCE_KINDS:
                raise ConfigError(f"unknown distance kind {d!r}")
        for a in self.alpha_grid:
            if not 0.0 < a < 1.0:
                raise ConfigError(f"alpha values must be in (0, 1), got {a}")

    @property
    def uses_alpha(self) -> bool:
        return self.second_layer == "Counting"


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]  # child_id -> fold index
    class_counts: tuple[tuple[int, int], ...]  # per fold (td, dysgraphia)

    def train_ids(self, fold: int) -> frozenset:
        return frozenset(c for c, f in self.assignment.items() if f != fold)

    def test_ids(self, fold: int) -> frozenset:
        return frozenset(c for c, f in self.assignment.items() if f == fold)


def make_folds(children: list[ChildRecord], k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified partition; fold sizes and class counts differ by <= 1."""
    pos = sorted(c.child_id for c in children if c.dysgraphia)
    neg = sorted(c.child_id for c in children if not c.dysgraphia)
    if len(pos) < k or len(neg) < k:
        raise ValueError(
            f"each class needs >= {k} children, got {len(neg)} TD / {len(pos)} dysgraphia"
        )
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xF0,)))
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    assignment: dict[str, int] = {}
    # positives: first (n % k) folds take the extra child; negatives fill from
    # the back so total fold sizes stay within one of each other
    def chunk(ids, extra_front):
        n = len(ids)
        base, extra = divmod(n, k)
        sizes = [base + (1 if (f < extra if extra_front else f >= k - extra) else 0) for f in range(k)]
        out = []
        i = 0
        for f, s in enumerate(sizes):
            out.append(ids[i : i + s])
            i += s
        return out

    for f, ids in enumerate(chunk(pos, True)):
        for cid in ids:
            assignment[cid] = f
    for f, ids in enumerate(chunk(neg, False)):
        for cid in ids:
            assignment[cid] = f
    counts = []
    by_label = {c.child_id: c.dysgraphia for c in children}
    for f in range(k):
        ids = [c for c, ff in assignment.items() if ff == f]
        p = sum(1 for c in ids if by_label[c])
        counts.append((len(ids) - p, p))
    return FoldPlan(k=k, assignment=assignment, class_counts=tuple(counts))


# ---------------------------------------------------------------------------
# ROC / AUC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RocResult:
    cutoffs: np.ndarray  # ascending; -inf sentinel gives the (1,1) endpoint
    fpr: np.ndarray
    tpr: np.ndarray
    accuracy: np.ndarray
    auc: float

    def points(self) -> list[tuple[float, float, float]]:
        return [
            (float(self.fpr[i]), float(self.tpr[i]), float(self.cutoffs[i]))
            for i in range(self.cutoffs.size)
        ]


def roc_auc(scores, labels) -> RocResult:
    """ROC over cutoffs at every distinct score plus {0, 1}; prediction is
    score > cutoff; AUC by trapezoid (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.size != labels.size or scores.size == 0:
        raise ValueError("scores and labels must be equal-length and nonempty")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("ROC needs both classes present")
    cutoffs = np.unique(np.concatenate((scores, [0.0, 1.0, -np.inf])))
    pred = scores[None, :] > cutoffs[:, None]
    tp = (pred & labels[None, :]).sum(axis=1)
    fp = (pred & ~labels[None, :]).sum(axis=1)
    tpr = tp / n_pos
    fpr = fp / (labels.size - n_pos)
    acc = (tp + (labels.size - n_pos - fp)) / labels.size
    order = np.lexsort((tpr, fpr))  # the ROC path: both rates ascending
    auc = float(np.trapz(tpr[order], fpr[order]))
    return RocResult(cutoffs=cutoffs, fpr=fpr, tpr=tpr, accuracy=acc, auc=auc)


def operating_point(roc: RocResult) -> tuple[float, float, float, float]:
    """(fpr, tpr, cutoff, accuracy) of the point nearest (0, 1); ties take
    the smaller FPR."""
    d2 = roc.fpr**2 + (1.0 - roc.tpr) ** 2
    order = np.lexsort((roc.cutoffs, roc.fpr, d2))
    i = order[0]
    return float(roc.fpr[i]), float(roc.tpr[i]), float(roc.cutoffs[i]), float(roc.accuracy[i])


# ---------------------------------------------------------------------------
# per-fold evaluation
# ---------------------------------------------------------------------------


@dataclass
class FirstLayerResult:
    method: str
    train_probs: dict[str, np.ndarray]  # per symbol, training children order
    child_probs_train: dict[str, dict[str, float]]  # child -> symbol -> p
    child_probs_test: dict[str, dict[str, float]]
    skipped: tuple[str, ...]
    models: dict[str, object] = field(default_factory=dict)


def run_first_layer(
    method: str,
    rows_by_symbol: dict[str, list[F.FeatureRow]],
    train_ids: frozenset,
    seed_seq: np.random.SeedSequence,
    config: RunConfig,
    keep_models: bool = False,
) -> FirstLayerResult:
    """One model per symbol; honest training probabilities (in-sample fit for
    GLM, out-of-bag votes for RF, inner-CV binary votes for SVM)."""
    if method not in FIRST_LAYERS:
        raise ConfigError(f"unknown first layer {method!r}")
    train_probs: dict[str, np.ndarray] = {}
    cp_train: dict[str, dict[str, float]] = {}
    cp_test: dict[str, dict[str, float]] = {}
    skipped: list[str] = []
    models: dict[str, object] = {}

    if method == "GLM":
        all_train_rows = [
            r for rows in rows_by_symbol.values() for r in rows if r.child_id in train_ids
        ]
        stats = F.compute_training_stats(all_train_rows)

    for si, symbol in enumerate(sorted(rows_by_symbol)):
        rows = rows_by_symbol[symbol]
        train_rows = [r for r in rows if r.child_id in train_ids]
        test_rows = [r for r in rows if r.child_id not in train_ids]
        labels = {r.label for r in train_rows}
        if len(labels) < 2:
            warnings.warn(f"symbol {symbol!r}: single-class training data, skipped", stacklevel=2)
            skipped.append(symbol)
            continue
        sseed = np.random.SeedSequence(
            entropy=seed_seq.entropy, spawn_key=seed_seq.spawn_key + (si,)
        )
        kernel_seed = int(sseed.generate_state(2, np.uint32).view(np.uint64)[0])
        y_train = np.array([1 if r.label else 0 for r in train_rows])
        if method == "GLM":
            d_train = F.dichotomize(train_rows, stats)
            d_test = F.dichotomize(test_rows, stats)
            data_train, _ = F.encode_rows(d_train)
            model = glm.glm_fit(data_train, y_train, selection=config.selection)
            p_train = model.predict(data_train)
            p_test = model.predict(F.encode_rows(d_test)[0]) if test_rows else np.empty(0)
        elif method == "RF":
            X_train = F.predictor_matrix(train_rows, F.RF_PREDICTORS)
            model = forest.rf_fit(
                X_train, y_train, F.RF_PREDICTORS,
                n_trees=config.n_trees, mtry=config.mtry_first, seed=kernel_seed,
            )
            p_train = model.oob_proba()
            p_test = (
                model.predict_proba(F.predictor_matrix(test_rows, F.RF_PREDICTORS))
                if test_rows
                else np.empty(0)
            )
        else:  # SVM
            X_train = F.predictor_matrix(train_rows, F.SVM_PREDICTORS)
            model = svm.svm_fit(X_train, y_train, seed=kernel_seed)
            p_train = model.inner_cv_train_pred.astype(np.float64)
            p_test = (
                model.predict(F.predictor_matrix(test_rows, F.SVM_PREDICTORS)).astype(np.float64)
                if test_rows
                else np.empty(0)
            )
        train_probs[symbol] = p_train
        for r, p in zip(train_rows, p_train):
            cp_train.setdefault(r.child_id, {})[symbol] = float(p)
        for r, p in zip(test_rows, p_test):
            cp_test.setdefault(r.child_id, {})[symbol] = float(p)
        if keep_models:
            models[symbol] = model
    if not train_probs:
        raise ValueError("every symbol was skipped; nothing to model")
    return FirstLayerResult(
        method=method,
        train_probs=train_probs,
        child_probs_train=cp_train,
        child_probs_test=cp_test,
        skipped=tuple(skipped),
        models=models,
    )


@dataclass
class SecondLayerResult:
    method: str
    train_scores: dict[str, float]
    test_scores: dict[str, float]
    dropped_train: tuple[str, ...]
    dropped_test: tuple[str, ...]
    model: object | None = None


def _complete_children(
    child_probs: dict[str, dict[str, float]], needed: list[str]
) -> tuple[list[str], list[str]]:
    complete, dropped = [], []
    for cid, probs in child_probs.items():
        (complete if all(s in probs for s in needed) else dropped).append(cid)
    return sorted(complete), sorted(dropped)


def run_second_layer(
    method: str,
    first: FirstLayerResult,
    alpha: float | None,
    seed_seq: np.random.SeedSequence,
    labels_by_child: dict[str, bool],
    config: RunConfig,
    keep_model: bool = False,
) -> SecondLayerResult:
    """Child-level composition. Counting keeps children with missing symbols;
    the GLM and RF second layers require a probability for every modeled
    symbol and drop incomplete children."""
    if method not in SECOND_LAYERS:
        raise ConfigError(f"unknown second layer {method!r}")
    modeled = sorted(first.train_probs)
    if method == "Counting":
        if alpha is None:
            raise ConfigError("Counting needs an alpha")
        params = counting.counting_threshold(first.train_probs, alpha)
        train_scores = {
            cid: counting.child_score(params, probs)
            for cid, probs in first.child_probs_train.items()
            if probs
        }
        test_scores = {
            cid: counting.child_score(params, probs)
            for cid, probs in first.child_probs_test.items()
            if probs
        }
        return SecondLayerResult(
            method=method,
            train_scores=train_scores,
            test_scores=test_scores,
            dropped_train=(),
            dropped_test=(),
            model=params if keep_model else None,
        )

    train_ok, train_drop = _complete_children(first.child_probs_train, modeled)
    test_ok, test_drop = _complete_children(first.child_probs_test, modeled)
    if train_drop or test_drop:
        warnings.warn(
            f"{method} second layer: dropped {len(train_drop)} train / "
            f"{len(test_drop)} test children with missing symbols",
            stacklevel=2,
        )
    if not train_ok:
        raise ValueError("no complete training children for the second layer")
    y_train = np.array([1 if labels_by_child[c] else 0 for c in train_ok])
    if len(np.unique(y_train)) < 2:
        raise ValueError("second layer training data is single-class after drops")

    def prob_matrix(ids):
        return np.array(
            [[first.child_probs_train.get(c, first.child_probs_test.get(c, {}))[s] for s in modeled] for c in ids]
        )

    X_train = prob_matrix(train_ok)
    X_test = prob_matrix(test_ok) if test_ok else np.empty((0, len(modeled)))
    if method == "GLM":
        data_train = {f"p_{s}": X_train[:, j] for j, s in enumerate(modeled)}
        scope = [(f"p_{s}",) for s in modeled]
        model = glm.glm_fit(
            data_train, y_train, scope=scope, selection=config.selection, direction="backward"
        )
        p_train = model.predict(data_train)
        p_test = (
            model.predict({f"p_{s}": X_test[:, j] for j, s in enumerate(modeled)})
            if test_ok
            else np.empty(0)
        )
    else:  # RF
        kernel_seed = int(seed_seq.generate_state(2, np.uint32).view(np.uint64)[0])
        model = forest.rf_fit(
            X_train, y_train, tuple(modeled),
            n_trees=config.n_trees, mtry=config.mtry_second, seed=kernel_seed,
        )
        p_train = model.oob_proba()
        p_test = model.predict_proba(X_test) if test_ok else np.empty(0)
    return SecondLayerResult(
        method=method,
        train_scores={c: float(p) for c, p in zip(train_ok, p_train)},
        test_scores={c: float(p) for c, p in zip(test_ok, p_test)},
        dropped_train=tuple(train_drop),
        dropped_test=tuple(test_drop),
        model=model if keep_model else None,
    )


def _auc_of(scores: dict[str, float], labels_by_child: dict[str, bool]) -> RocResult:
    ids = sorted(scores)
    return roc_auc([scores[c] for c in ids], [labels_by_child[c] for c in ids])


# ---------------------------------------------------------------------------
# feature precompute and fold tasks
# ---------------------------------------------------------------------------


@dataclass
class CohortFeatures:
    """Fold-independent per-trace data shared by every sweep task."""

    children: list[ChildRecord]
    profiles: dict[tuple[str, str], reference.ZeroProfile]
    velocities: dict[tuple[str, str], object]
    total_times: dict[tuple[str, str], float]
    w_cap: int


def precompute_features(children: list[ChildRecord], w_cap: int) -> CohortFeatures:
    from pomh.morphology import make_w_grid

    grid = make_w_grid(w_cap)
    profiles = {}
    velocities = {}
    total_times = {}
    for child in children:
        for symbol, trace in child.traces.items():
            key = (child.child_id, symbol)
            v = compute_velocity(trace)
            velocities[key] = v
            profiles[key] = reference.zero_profile(v, grid)
            total_times[key] = total_pen_down_time(trace)
    return CohortFeatures(
        children=children,
        profiles=profiles,
        velocities=velocities,
        total_times=total_times,
        w_cap=w_cap,
    )


def build_fold_rows(
    feats: CohortFeatures,
    train_ids: frozenset,
    w_max: int,
    fit_cache: dict | None = None,
) -> tuple[dict[str, dict[str, list[F.FeatureRow]]], reference.ReferenceTable]:
    """Reference table from the TD training children, width estimates and
    model fits for everyone, rows for each distance kind."""
    td_train = [c for c in feats.children if c.child_id in train_ids and not c.dysgraphia]
    table = reference.build_reference(td_train, feats.profiles, w_max)
    rows: dict[str, dict[str, list[F.FeatureRow]]] = {
        kind: {} for kind in oscillator.DISTANCE_KINDS
    }
    cache = fit_cache if fit_cache is not None else {}
    for child in feats.children:
        for symbol, trace in child.traces.items():
            key = (child.child_id, symbol)
            try:
                w_est = reference.estimate_w(feats.profiles[key], table, child.age_months, symbol)
            except reference.UnsupportedCellError:
                continue
            ckey = (child.child_id, symbol, w_est.w_hat_x, w_est.w_hat_y)
            dists = cache.get(ckey)
            if dists is None:
                fit = oscillator.fit_pomh(trace, w_est.w_hat_x, w_est.w_hat_y, feats.velocities[key])
                dists = fit.distances
                cache[ckey] = dists
            for kind in oscillator.DISTANCE_KINDS:
                rows[kind].setdefault(symbol, []).append(
                    F.FeatureRow(
                        child_id=child.child_id,
                        symbol=symbol,
                        w_hat_x=w_est.w_hat_x,
                        w_hat_y=w_est.w_hat_y,
                        saturated_x=w_est.saturated_x,
                        saturated_y=w_est.saturated_y,
                        dist=dists[kind],
                        total_time=feats.total_times[key],
                        grade=child.grade,
                        label=child.dysgraphia,
                    )
                )
    return rows, table


def _hash_arrays(h, *arrays):
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())


def _fold_artifact_hash(table, stats, first: FirstLayerResult, thresholds_by_alpha) -> str:
    h = hashlib.sha256()
    _hash_arrays(h, table.age_grid)
    for symbol in sorted(table.values):
        for axis in reference.AXES:
            _hash_arrays(h, table.values[symbol][axis], table.support[symbol][axis])
    for symbol in sorted(stats):
        st = stats[symbol]
        _hash_arrays(
            h, np.array([st.median_wx, st.mean_total_time, st.dist_mean, st.dist_sd])
        )
    for symbol in sorted(first.models):
        model = first.models[symbol]
        if isinstance(model, glm.GlmModel):
            _hash_arrays(h, model.theta)
        elif isinstance(model, forest.ForestModel):
            _hash_arrays(h, model.feat, model.thr, model.left, model.right,
                         model.value, model.offsets, model.oob_pos, model.oob_tot)
        elif isinstance(model, svm.SvmModel):
            _hash_arrays(h, model.support_X, model.support_coef,
                         np.array([model.bias, model.gamma, model.C]))
    for alpha in sorted(thresholds_by_alpha):
        params = thresholds_by_alpha[alpha]
        _hash_arrays(h, np.array([params.thresholds[s] for s in sorted(params.thresholds)]))
    return h.hexdigest()


@dataclass
class CellResult:
    fold: int
    w_max: int
    dist: str
    alpha: float | None
    auc_train: float
    auc_test: float
    roc_train: RocResult
    roc_test: RocResult
    artifact_hash: str | None = None


_TASK_CTX: dict = {}


def _init_task_ctx(feats: CohortFeatures, plans: list[FoldPlan], configs: list[RunConfig]):
    _TASK_CTX["feats"] = feats
    _TASK_CTX["plans"] = plans
    _TASK_CTX["configs"] = configs
    _TASK_CTX["fit_cache"] = {}
    # one (train_ids, w_max) row set can serve several configs in a task batch
    _TASK_CTX["row_cache"] = {}


def _run_fold_wmax(args: tuple[int, int, int]) -> list[CellResult]:
    ci, fold, w_max = args
    feats: CohortFeatures = _TASK_CTX["feats"]
    plan: FoldPlan = _TASK_CTX["plans"][ci]
    config: RunConfig = _TASK_CTX["configs"][ci]
    labels_by_child = {c.child_id: c.dysgraphia for c in feats.children}
    train_ids = plan.train_ids(fold)
    row_key = (train_ids, w_max)
    cached = _TASK_CTX["row_cache"].get(row_key)
    if cached is None:
        cached = build_fold_rows(feats, train_ids, w_max, _TASK_CTX["fit_cache"])
        _TASK_CTX["row_cache"] = {row_key: cached}  # keep only the latest
    rows_all, table = cached
    out: list[CellResult] = []
    for di, kind in enumerate(config.dist_kinds):
        rows_by_symbol = rows_all[kind]
        seed_seq = np.random.SeedSequence(
            config.seed, spawn_key=(1, fold, w_max, di)
        )
        first = run_first_layer(
            config.first_layer, rows_by_symbol, train_ids, seed_seq, config,
            keep_models=config.audit_hashes,
        )
        alphas = config.alpha_grid if config.uses_alpha else (None,)
        thresholds_by_alpha = {}
        for alpha in alphas:
            second_seed = np.random.SeedSequence(config.seed, spawn_key=(2, fold, w_max, di))
            second = run_second_layer(
                config.second_layer, first, alpha, second_seed, labels_by_child, config,
                keep_model=config.audit_hashes and config.second_layer == "Counting",
            )
            if config.audit_hashes and second.model is not None:
                thresholds_by_alpha[alpha] = second.model
            roc_train = _auc_of(second.train_scores, labels_by_child)
            roc_test = _auc_of(second.test_scores, labels_by_child)
            out.append(
                CellResult(
                    fold=fold,
                    w_max=w_max,
                    dist=kind,
                    alpha=alpha,
                    auc_train=roc_train.auc,
                    auc_test=roc_test.auc,
                    roc_train=roc_train,
                    roc_test=roc_test,
                )
            )
        if config.audit_hashes:
            stats = F.compute_training_stats(
                [r for rows in rows_by_symbol.values() for r in rows if r.child_id in train_ids]
            )
            digest = _fold_artifact_hash(table, stats, first, thresholds_by_alpha)
            for cell in out:
                if cell.dist == kind:
                    cell.artifact_hash = digest
    return out


# ---------------------------------------------------------------------------
# sweep and report
# ---------------------------------------------------------------------------


@dataclass
class SweepCell:
    w_max: int
    dist: str
    alpha: float | None
    auc_train: float  # mean over folds
    auc_test: float
    fold_train: tuple[float, ...]
    fold_test: tuple[float, ...]


@dataclass
class EvaluationReport:
    first_layer: str
    second_layer: str
    seed: int
    folds: int
    cells: list[SweepCell]
    fold_results: list[CellResult]

    def cell(self, w_max: int, dist: str, alpha: float | None) -> SweepCell:
        for c in self.cells:
            if c.w_max == w_max and c.dist == dist and (
                alpha is None if c.alpha is None else c.alpha == alpha
            ):
                return c
        raise KeyError((w_max, dist, alpha))

    def best_cells(self) -> dict[str, SweepCell]:
        """Highest mean test AUC per distance kind (ties: first in grid order)."""
        best: dict[str, SweepCell] = {}
        for c in self.cells:
            cur = best.get(c.dist)
            if cur is None or c.auc_test > cur.auc_test:
                best[c.dist] = c
        return best

    def best_cell(self) -> SweepCell:
        return max(self.best_cells().values(), key=lambda c: c.auc_test)


def run_sweeps(
    children: list[ChildRecord],
    configs: list[RunConfig],
    feats: CohortFeatures | None = None,
) -> list[EvaluationReport]:
    """Run several sweep configurations over one worker pool.

    Configurations sharing (seed, folds) reuse each other's fold feature
    tables and model-fit caches, so e.g. an RF and a GLM sweep over the same
    grids cost little more than the slower of the two.
    """
    w_cap = max(w for c in configs for w in c.w_max_grid)
    plans = [make_folds(children, c.folds, c.seed) for c in configs]
    if feats is None or feats.w_cap < w_cap:
        feats = precompute_features(children, w_cap)
    # group same-(fold, w_max) tasks adjacently so workers hit the row cache
    keys = sorted({(f, w) for ci, c in enumerate(configs) for w in c.w_max_grid for f in range(c.folds)})
    tasks = [
        (ci, f, w)
        for (f, w) in keys
        for ci, c in enumerate(configs)
        if w in c.w_max_grid and f < c.folds
    ]
    _init_task_ctx(feats, plans, configs)
    jobs = max(c.jobs for c in configs)
    results: dict[int, list[CellResult]] = {ci: [] for ci in range(len(configs))}
    if jobs == 1 or len(tasks) == 1:
        for t in tasks:
            results[t[0]].extend(_run_fold_wmax(t))
    else:
        # fork start method shares the context read-only with the workers
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        chunk = max(1, len(configs))
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            for t, res in zip(tasks, pool.map(_run_fold_wmax, tasks, chunksize=chunk)):
                results[t[0]].extend(res)
    reports = []
    for ci, config in enumerate(configs):
        rs = results[ci]
        rs.sort(key=lambda r: (r.w_max, r.dist, -np.inf if r.alpha is None else r.alpha, r.fold))
        cells: list[SweepCell] = []
        alphas = config.alpha_grid if config.uses_alpha else (None,)
        for w_max in config.w_max_grid:
            for kind in config.dist_kinds:
                for alpha in alphas:
                    group = [
                        r for r in rs if r.w_max == w_max and r.dist == kind and r.alpha == alpha
                    ]
                    if len(group) != config.folds:
                        raise RuntimeError(
                            f"cell ({w_max}, {kind}, {alpha}) has {len(group)} fold results"
                        )
                    cells.append(
                        SweepCell(
                            w_max=w_max,
                            dist=kind,
                            alpha=alpha,
                            auc_train=float(np.mean([r.auc_train for r in group])),
                            auc_test=float(np.mean([r.auc_test for r in group])),
                            fold_train=tuple(r.auc_train for r in group),
                            fold_test=tuple(r.auc_test for r in group),
                        )
                    )
        reports.append(
            EvaluationReport(
                first_layer=config.first_layer,
                second_layer=config.second_layer,
                seed=config.seed,
                folds=config.folds,
                cells=cells,
                fold_results=rs,
            )
        )
    return reports


def run_sweep(
    children: list[ChildRecord], config: RunConfig, feats: CohortFeatures | None = None
) -> EvaluationReport:
    """Full factorial (w_max, distance[, alpha]) evaluation over k folds."""
    return run_sweeps(children, [config], feats)[0]


def report_csv(report: EvaluationReport) -> str:
    lines = ["ty_dist,w_max,alpha,auc_train,auc_test"]
    for c in report.cells:
        alpha = "" if c.alpha is None else f"{c.alpha:.3f}"
        lines.append(
            f"{DIST_REPORT_NAMES[c.dist]},{c.w_max},{alpha},{c.auc_train:.6f},{c.auc_test:.6f}"
        )
    return "\n".join(lines) + "\n"


def best_table(report: EvaluationReport) -> str:
    """Best-parameter rows per distance kind, one line per kind."""
    with_alpha = report.second_layer == "Counting"
    header = "ty_dist w_max alpha auc_train auc_test" if with_alpha else "ty_dist w_max auc_train auc_test"
    lines = [header]
    best = report.best_cells()
    for kind in ("L1", "L2", "Linf"):
        if kind not in best:
            continue
        c = best[kind]
        if with_alpha:
            lines.append(
                f"{DIST_REPORT_NAMES[kind]} {c.w_max} {c.alpha:.3f} "
                f"{c.auc_train:.3f} {c.auc_test:.3f}"
            )
        else:
            lines.append(
                f"{DIST_REPORT_NAMES[kind]} {c.w_max} {c.auc_train:.3f} {c.auc_test:.3f}"
            )
    return "\n".join(lines) + "\n"


def report_json(report: EvaluationReport) -> dict:
    return {
        "version": 1,
        "first_layer": report.first_layer,
        "second_layer": report.second_layer,
        "seed": report.seed,
        "folds": report.folds,
        "cells": [
            {
                "ty_dist": DIST_REPORT_NAMES[c.dist],
                "w_max": c.w_max,
                "alpha": c.alpha,
                "auc_train": round(c.auc_train, 6),
                "auc_test": round(c.auc_test, 6),
                "fold_train": [round(v, 6) for v in c.fold_train],
                "fold_test": [round(v, 6) for v in c.fold_test],
            }
            for c in report.cells
        ],
        "best": {
            DIST_REPORT_NAMES[k]: {
                "w_max": c.w_max,
                "alpha": c.alpha,
                "auc_train": round(c.auc_train, 6),
                "auc_test": round(c.auc_test, 6),
            }
            for k, c in report.best_cells().items()
        },
    }


def roc_points_csv(report: EvaluationReport, w_max: int, dist: str, alpha: float | None,
                   split: str = "test") -> str:
    lines = ["fold,cutoff,fpr,tpr"]
    for r in report.fold_results:
        if r.w_max != w_max or r.dist != dist or r.alpha != alpha:
            continue
        roc = r.roc_test if split == "test" else r.roc_train
        for i in range(roc.cutoffs.size):
            lines.append(f"{r.fold},{roc.cutoffs[i]:.6g},{roc.fpr[i]:.6f},{roc.tpr[i]:.6f}")
    return "\n".join(lines) + "\n"
