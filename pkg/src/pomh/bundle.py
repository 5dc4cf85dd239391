"""Trained two-layer model bundles: fit on a cohort, save, load, score.

A bundle freezes everything needed to score new children at a fixed
(w_max, distance, alpha): the age reference table, per-symbol training
statistics, the 36 first-layer models, and the second-layer model. The
container is a single .npz holding numeric arrays plus one JSON metadata
string (format version 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from pomh import features as F
from pomh import oscillator, pipeline, reference
from pomh.classifiers import counting, forest, glm, svm
from pomh.traces import ChildRecord

BUNDLE_VERSION = 1


@dataclass
class TrainedModel:
    first_layer: str
    second_layer: str
    w_max: int
    dist_kind: str
    alpha: float | None
    seed: int
    table: reference.ReferenceTable
    stats: dict[str, F.SymbolStats]
    first_models: dict[str, object]
    second_model: object
    skipped: tuple[str, ...]


def train_full(
    children: list[ChildRecord],
    first_layer: str,
    second_layer: str,
    w_max: int,
    dist_kind: str,
    alpha: float | None,
    seed: int = 0,
    config: pipeline.RunConfig | None = None,
) -> TrainedModel:
    """Fit both layers on the full cohort (no held-out fold)."""
    if config is None:
        config = pipeline.RunConfig(
            first_layer=first_layer, second_layer=second_layer,
            w_max_grid=(w_max,), dist_kinds=(dist_kind,),
            alpha_grid=(alpha,) if alpha is not None else pipeline.DEFAULT_ALPHA_GRID,
            seed=seed,
        )
    feats = pipeline.precompute_features(children, w_max)
    all_ids = frozenset(c.child_id for c in children)
    rows_all, table = pipeline.build_fold_rows(feats, all_ids, w_max)
    seed_seq = np.random.SeedSequence(seed, spawn_key=(1, 0, w_max, 0))
    first = pipeline.run_first_layer(
        first_layer, rows_all[dist_kind], all_ids, seed_seq, config, keep_models=True
    )
    labels = {c.child_id: c.dysgraphia for c in children}
    second = pipeline.run_second_layer(
        second_layer, first, alpha,
        np.random.SeedSequence(seed, spawn_key=(2, 0, w_max, 0)),
        labels, config, keep_model=True,
    )
    train_rows = [r for rows in rows_all[dist_kind].values() for r in rows]
    return TrainedModel(
        first_layer=first_layer,
        second_layer=second_layer,
        w_max=w_max,
        dist_kind=dist_kind,
        alpha=alpha,
        seed=seed,
        table=table,
        stats=F.compute_training_stats(train_rows),
        first_models=first.models,
        second_model=second.model,
        skipped=first.skipped,
    )


def score_children(model: TrainedModel, children: list[ChildRecord]) -> dict[str, float]:
    """Child-level dysgraphia scores for new children."""
    feats = pipeline.precompute_features(children, model.w_max)
    modeled = sorted(model.first_models)
    child_probs: dict[str, dict[str, float]] = {}
    for child in children:
        for symbol, trace in child.traces.items():
            if symbol not in model.first_models:
                continue
            key = (child.child_id, symbol)
            try:
                w_est = reference.estimate_w(
                    feats.profiles[key], model.table, child.age_months, symbol
                )
            except reference.UnsupportedCellError:
                continue
            fit = oscillator.fit_pomh(trace, w_est.w_hat_x, w_est.w_hat_y, feats.velocities[key])
            row = F.FeatureRow(
                child_id=child.child_id, symbol=symbol,
                w_hat_x=w_est.w_hat_x, w_hat_y=w_est.w_hat_y,
                saturated_x=w_est.saturated_x, saturated_y=w_est.saturated_y,
                dist=fit.distances[model.dist_kind],
                total_time=feats.total_times[key],
                grade=child.grade, label=child.dysgraphia,
            )
            m = model.first_models[symbol]
            if model.first_layer == "GLM":
                data, _ = F.encode_rows(F.dichotomize([row], model.stats))
                p = float(m.predict(data)[0])
            elif model.first_layer == "RF":
                p = float(m.predict_proba(F.predictor_matrix([row], F.RF_PREDICTORS))[0])
            else:
                p = float(m.predict(F.predictor_matrix([row], F.SVM_PREDICTORS))[0])
            child_probs.setdefault(child.child_id, {})[symbol] = p
    scores: dict[str, float] = {}
    if model.second_layer == "Counting":
        for cid, probs in child_probs.items():
            if probs:
                scores[cid] = counting.child_score(model.second_model, probs)
        return scores
    for cid, probs in child_probs.items():
        if not all(s in probs for s in modeled):
            continue
        if model.second_layer == "GLM":
            data = {f"p_{s}": np.array([probs[s]]) for s in modeled}
            scores[cid] = float(model.second_model.predict(data)[0])
        else:
            X = np.array([[probs[s] for s in modeled]])
            scores[cid] = float(model.second_model.predict_proba(X)[0])
    return scores


# ---------------------------------------------------------------------------
# npz container
# ---------------------------------------------------------------------------


def _pack_model(prefix: str, model: object, arrays: dict, meta: dict):
    if isinstance(model, glm.GlmModel):
        meta["kind"] = "glm"
        meta["scope"] = [list(t) for t in model.scope]
        meta["selected"] = [list(t) for t in model.selected]
        meta["selection"] = model.selection
        arrays[f"{prefix}/theta"] = model.theta
    elif isinstance(model, forest.ForestModel):
        meta["kind"] = "rf"
        meta["feature_names"] = list(model.feature_names)
        meta["n_trees"] = model.n_trees
        meta["mtry"] = model.mtry
        meta["seed"] = model.seed
        for name in ("feat", "thr", "left", "right", "value", "offsets", "oob_pos", "oob_tot"):
            arrays[f"{prefix}/{name}"] = getattr(model, name)
    elif isinstance(model, svm.SvmModel):
        meta["kind"] = "svm"
        meta["bias"] = model.bias
        meta["gamma"] = model.gamma
        meta["C"] = model.C
        meta["class_weights"] = {str(k): v for k, v in model.class_weights.items()}
        meta["inner_cv_error"] = model.inner_cv_error
        for name in ("support_X", "support_coef", "scale_mean", "scale_std"):
            arrays[f"{prefix}/{name}"] = getattr(model, name)
    elif isinstance(model, counting.CountingParams):
        meta["kind"] = "counting"
        meta["alpha"] = model.alpha
        meta["symbols"] = sorted(model.thresholds)
        arrays[f"{prefix}/thresholds"] = np.array(
            [model.thresholds[s] for s in sorted(model.thresholds)]
        )
    else:
        raise TypeError(f"cannot serialize model of type {type(model)!r}")


def _unpack_model(prefix: str, meta: dict, z) -> object:
    kind = meta["kind"]
    if kind == "glm":
        scope = [tuple(t) for t in meta["scope"]]
        theta = z[f"{prefix}/theta"]
        return glm.GlmModel(
            scope=scope,
            selected=[tuple(t) for t in meta["selected"]],
            theta=theta,
            aic=float("nan"),
            selection=meta["selection"],
        )
    if kind == "rf":
        return forest.ForestModel(
            feature_names=tuple(meta["feature_names"]),
            n_trees=int(meta["n_trees"]),
            mtry=int(meta["mtry"]),
            seed=int(meta["seed"]),
            feat=z[f"{prefix}/feat"],
            thr=z[f"{prefix}/thr"],
            left=z[f"{prefix}/left"],
            right=z[f"{prefix}/right"],
            value=z[f"{prefix}/value"],
            offsets=z[f"{prefix}/offsets"],
            oob_pos=z[f"{prefix}/oob_pos"],
            oob_tot=z[f"{prefix}/oob_tot"],
        )
    if kind == "svm":
        return svm.SvmModel(
            support_X=z[f"{prefix}/support_X"],
            support_coef=z[f"{prefix}/support_coef"],
            bias=float(meta["bias"]),
            gamma=float(meta["gamma"]),
            C=float(meta["C"]),
            class_weights={int(k): float(v) for k, v in meta["class_weights"].items()},
            scale_mean=z[f"{prefix}/scale_mean"],
            scale_std=z[f"{prefix}/scale_std"],
            inner_cv_error=float(meta["inner_cv_error"]),
            inner_cv_train_pred=np.empty(0),
            n_iter=0,
        )
    if kind == "counting":
        thr = z[f"{prefix}/thresholds"]
        return counting.CountingParams(
            alpha=float(meta["alpha"]),
            thresholds={s: float(t) for s, t in zip(meta["symbols"], thr)},
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_bundle(path, model: TrainedModel) -> None:
    arrays: dict[str, np.ndarray] = {}
    meta = {
        "version": BUNDLE_VERSION,
        "first_layer": model.first_layer,
        "second_layer": model.second_layer,
        "w_max": model.w_max,
        "dist_kind": model.dist_kind,
        "alpha": model.alpha,
        "seed": model.seed,
        "skipped": list(model.skipped),
        "reference_csv": reference.reference_to_csv(model.table),
        "stats": {
            s: [st.median_wx, st.mean_total_time, st.dist_mean, st.dist_sd]
            for s, st in model.stats.items()
        },
        "first_models": {},
        "second_model": {},
    }
    for symbol, m in model.first_models.items():
        meta["first_models"][symbol] = {}
        _pack_model(f"first/{symbol}", m, arrays, meta["first_models"][symbol])
    _pack_model("second", model.second_model, arrays, meta["second_model"])
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_bundle(path) -> TrainedModel:
    z = np.load(path)
    meta = json.loads(bytes(z["__meta__"]).decode("utf-8"))
    if meta["version"] != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {meta['version']}")
    table = reference.reference_from_csv(meta["reference_csv"], int(meta["w_max"]))
    stats = {
        s: F.SymbolStats(*[float(v) for v in vals]) for s, vals in meta["stats"].items()
    }
    first_models = {
        symbol: _unpack_model(f"first/{symbol}", m_meta, z)
        for symbol, m_meta in meta["first_models"].items()
    }
    second = _unpack_model("second", meta["second_model"], z)
    return TrainedModel(
        first_layer=meta["first_layer"],
        second_layer=meta["second_layer"],
        w_max=int(meta["w_max"]),
        dist_kind=meta["dist_kind"],
        alpha=meta["alpha"],
        seed=int(meta["seed"]),
        table=table,
        stats=stats,
        first_models=first_models,
        second_model=second,
        skipped=tuple(meta["skipped"]),
    )
