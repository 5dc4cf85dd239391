"""Bootstrap forest of CART trees (Gini, grown to purity) with honest
out-of-bag probabilities for training rows.

Tree growth runs in the compiled kernel when available; results are
bit-identical across back ends for a fixed seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from pomh import _kernels


@dataclass
class ForestModel:
    feature_names: tuple[str, ...]
    n_trees: int
    mtry: int
    seed: int
    feat: np.ndarray
    thr: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray
    oob_pos: np.ndarray  # per training row
    oob_tot: np.ndarray
    _train_X: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return int(self.feat.size)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Fraction of trees voting for the positive class."""
        X = np.asarray(X, dtype=np.float64)
        votes = _kernels.forest_apply(
            self.feat, self.thr, self.left, self.right, self.value, self.offsets, X
        )
        return votes / self.n_trees

    def oob_proba(self) -> np.ndarray:
        """OOB vote fraction per training row; rows never OOB fall back to
        the all-tree vote (vanishingly rare at 500 trees)."""
        never = self.oob_tot == 0
        out = np.empty(self.oob_tot.size)
        ok = ~never
        out[ok] = self.oob_pos[ok] / self.oob_tot[ok]
        if never.any():
            warnings.warn(
                f"{int(never.sum())} training row(s) never out-of-bag; "
                "using all-tree votes for them",
                stacklevel=2,
            )
            out[never] = self._train_proba_rows(np.flatnonzero(never))
        return out

    def _train_proba_rows(self, rows: np.ndarray) -> np.ndarray:
        return self.predict_proba(self._train_X[rows])


def rf_fit(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: tuple[str, ...],
    n_trees: int = 500,
    mtry: int = 2,
    seed: int = 0,
) -> ForestModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int32)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("rf_fit needs rows from both classes")
    if X.shape[0] != y.size:
        raise ValueError("X and y lengths differ")
    feat, thr, left, right, value, offsets, oob_pos, oob_tot = _kernels.grow_forest(
        X, y, n_trees, mtry, seed
    )
    model = ForestModel(
        feature_names=tuple(feature_names),
        n_trees=n_trees,
        mtry=mtry,
        seed=seed,
        feat=feat,
        thr=thr,
        left=left,
        right=right,
        value=value,
        offsets=offsets,
        oob_pos=oob_pos,
        oob_tot=oob_tot,
    )
    model._train_X = X
    return model


def rf_predict(model: ForestModel, X: np.ndarray) -> np.ndarray:
    return model.predict_proba(X)
