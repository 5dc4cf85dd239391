"""Pure numpy fallback for the compiled kernels.

Implements exactly the same algorithms (same RNG, same tie-breaking, same
float64 arithmetic order) as ``_fast.pyx`` so that results are bit-identical
between the two back ends.
"""

from __future__ import annotations

import numpy as np

IMPL = "pure"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class _SplitMix:
    """splitmix64 stream; mirrored verbatim in the C kernel."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        return _mix(self.state)

    def randint(self, n: int) -> int:
        return self.next_u64() % n


def tree_seed(seed: int, tree_index: int) -> int:
    return _mix((seed + (tree_index + 1) * _GOLDEN) & _MASK)


# ---------------------------------------------------------------------------
# 1-D binary morphology in run space.
#
# Closing with a flat element of odd length w (dilation pads 0, erosion pads
# 1) reduces to: merge 1-runs separated by gaps <= w-1, and extend the
# outermost runs to the border when they reach within (w-1)/2 of it.
# ---------------------------------------------------------------------------


def _run_bounds(bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(bits, dtype=np.uint8)
    if b.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    d = np.diff(b.astype(np.int8))
    starts = np.flatnonzero(d == 1) + 1
    ends = np.flatnonzero(d == -1)
    if b[0]:
        starts = np.concatenate(([0], starts))
    if b[-1]:
        ends = np.concatenate((ends, [b.size - 1]))
    return starts.astype(np.int64), ends.astype(np.int64)


def closing(bits: np.ndarray, w: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    n = b.size
    out = np.zeros(n, dtype=np.uint8)
    starts, ends = _run_bounds(b)
    if starts.size == 0:
        return out
    h = (w - 1) // 2
    ds = np.maximum(starts - h, 0)
    de = np.minimum(ends + h, n - 1)
    # merge dilated runs that touch or overlap
    cur_s, cur_e = ds[0], de[0]
    merged = []
    for k in range(1, ds.size):
        if ds[k] <= cur_e + 1:
            cur_e = de[k]
        else:
            merged.append((cur_s, cur_e))
            cur_s, cur_e = ds[k], de[k]
    merged.append((cur_s, cur_e))
    for s, e in merged:
        a = 0 if s == 0 else s + h
        z = n - 1 if e == n - 1 else e - h
        out[a : z + 1] = 1
    return out


def close_run_counts(bits: np.ndarray, w_values: np.ndarray) -> np.ndarray:
    """Number of 1-runs after closing, for every window size in w_values."""
    starts, ends = _run_bounds(np.asarray(bits, dtype=np.uint8))
    ws = np.asarray(w_values, dtype=np.int64)
    r = starts.size
    if r == 0:
        return np.zeros(ws.size, dtype=np.int64)
    gaps = starts[1:] - ends[:-1] - 1
    out = np.empty(ws.size, dtype=np.int64)
    for i, w in enumerate(ws):
        out[i] = r - int(np.count_nonzero(gaps <= w - 1))
    return out


# ---------------------------------------------------------------------------
# CART forest: Gini splits, grown to purity, bootstrap + OOB tallies.
# ---------------------------------------------------------------------------


def _grow_tree(X, y, rng, mtry, samples):
    n_feat = X.shape[1]
    feat, thr, left, right, value = [], [], [], [], []

    def new_node():
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(-1)
        return len(feat) - 1

    root = new_node()
    c1 = int(np.count_nonzero(y[samples]))
    stack = [(root, 0, len(samples), len(samples) - c1, c1)]
    while stack:
        node, start, end, c0, c1 = stack.pop()
        m = end - start
        if c0 == 0 or c1 == 0 or m < 2:
            value[node] = 0 if c0 >= c1 else 1
            continue
        # candidate features: partial Fisher-Yates over [0, n_feat)
        pool = list(range(n_feat))
        k = min(mtry, n_feat)
        best_score = -1.0
        best_feat = -1
        best_thr = 0.0
        best_ml = 0
        best_cl1 = 0
        for i in range(k):
            j = i + rng.randint(n_feat - i)
            pool[i], pool[j] = pool[j], pool[i]
            f = pool[i]
            vals = X[samples[start:end], f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            sl = y[samples[start:end]][order].astype(np.int64)
            boundary = sv[:-1] < sv[1:]
            if not boundary.any():
                continue
            cum1 = np.cumsum(sl)[:-1]
            ml = np.arange(1, m, dtype=np.int64)
            cl1 = cum1
            cl0 = ml - cl1
            cr1 = c1 - cl1
            cr0 = (m - ml) - cr1
            score = (cl0 * cl0 + cl1 * cl1) / ml + (cr0 * cr0 + cr1 * cr1) / (m - ml)
            score = np.where(boundary, score, -np.inf)
            pos = int(np.argmax(score))
            if score[pos] > best_score:
                best_score = float(score[pos])
                best_feat = f
                mid = 0.5 * (float(sv[pos]) + float(sv[pos + 1]))
                if mid == float(sv[pos + 1]):
                    mid = float(sv[pos])
                best_thr = mid
                best_ml = pos + 1
                best_cl1 = int(cl1[pos])
        if best_feat < 0:
            value[node] = 0 if c0 >= c1 else 1
            continue
        seg = samples[start:end]
        go_left = X[seg, best_feat] <= best_thr
        samples[start:end] = np.concatenate((seg[go_left], seg[~go_left]))
        lid = new_node()
        rid = new_node()
        feat[node] = best_feat
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid
        value[node] = -1
        ml = best_ml
        cl1 = best_cl1
        stack.append((rid, start + ml, end, (m - ml) - (c1 - cl1), c1 - cl1))
        stack.append((lid, start, start + ml, ml - cl1, cl1))
    return (
        np.asarray(feat, dtype=np.int32),
        np.asarray(thr, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(value, dtype=np.int32),
    )


def grow_forest(X, y, n_trees: int, mtry: int, seed: int):
    """Fit a bootstrap forest.

    Returns flat node arrays (feat, thr, left, right, value), tree offsets,
    and per-row OOB tallies (positive votes, total votes).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int32)
    n = X.shape[0]
    feats, thrs, lefts, rights, values = [], [], [], [], []
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    oob_pos = np.zeros(n, dtype=np.int64)
    oob_tot = np.zeros(n, dtype=np.int64)
    for t in range(n_trees):
        rng = _SplitMix(tree_seed(seed, t))
        boot = np.array([rng.randint(n) for _ in range(n)], dtype=np.int64)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[boot] = True
        tree = _grow_tree(X, y, rng, mtry, boot.copy())
        feats.append(tree[0])
        thrs.append(tree[1])
        lefts.append(tree[2])
        rights.append(tree[3])
        values.append(tree[4])
        offsets[t + 1] = offsets[t] + tree[0].size
        oob = np.flatnonzero(~in_bag)
        if oob.size:
            pred = _apply_tree(tree, X[oob])
            oob_pos[oob] += pred
            oob_tot[oob] += 1
    return (
        np.concatenate(feats),
        np.concatenate(thrs),
        np.concatenate(lefts),
        np.concatenate(rights),
        np.concatenate(values),
        offsets,
        oob_pos,
        oob_tot,
    )


def _apply_tree(tree, X):
    feat, thr, left, right, value = tree
    m = X.shape[0]
    node = np.zeros(m, dtype=np.int64)
    while True:
        f = feat[node]
        internal = f >= 0
        if not internal.any():
            break
        idx = np.flatnonzero(internal)
        fv = X[idx, f[idx]]
        go_left = fv <= thr[node[idx]]
        node[idx] = np.where(go_left, left[node[idx]], right[node[idx]])
    return value[node].astype(np.int64)


def forest_apply(feat, thr, left, right, value, offsets, X) -> np.ndarray:
    """Positive-class votes per row of X, summed over all trees."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    pos = np.zeros(X.shape[0], dtype=np.int64)
    for t in range(offsets.size - 1):
        a, b = offsets[t], offsets[t + 1]
        pos += _apply_tree((feat[a:b], thr[a:b], left[a:b], right[a:b], value[a:b]), X)
    return pos
