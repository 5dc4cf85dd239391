# Compiled kernels: 1-D morphological closing in run space and CART forest
# growth. Must stay bit-identical to _pure.py (same splitmix64 stream, same
# tie-breaking, same float64 arithmetic order).

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()

IMPL = "fast"

ctypedef unsigned long long u64

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline u64 _mix(u64 z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline u64 _next(u64 *state) nogil:
    state[0] = state[0] + GOLDEN
    return _mix(state[0])


cdef inline long _randint(u64 *state, long n) nogil:
    return <long>(_next(state) % <u64>n)


def tree_seed(seed, tree_index):
    cdef u64 s = <u64>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef u64 t = <u64>(tree_index + 1)
    return int(_mix(s + t * GOLDEN))


# ---------------------------------------------------------------------------
# morphology
# ---------------------------------------------------------------------------


def closing(bits, int w):
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] b = np.ascontiguousarray(bits, dtype=np.uint8)
    cdef long n = b.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out = np.zeros(n, dtype=np.uint8)
    cdef long h = (w - 1) // 2
    cdef long i = 0, s, e, ds, de, cur_s, cur_e, a, z, j
    cdef bint have = False
    cur_s = 0
    cur_e = -2
    while i < n:
        if b[i]:
            s = i
            while i < n and b[i]:
                i += 1
            e = i - 1
            ds = s - h
            if ds < 0:
                ds = 0
            de = e + h
            if de > n - 1:
                de = n - 1
            if have and ds <= cur_e + 1:
                cur_e = de
            else:
                if have:
                    a = 0 if cur_s == 0 else cur_s + h
                    z = n - 1 if cur_e == n - 1 else cur_e - h
                    for j in range(a, z + 1):
                        out[j] = 1
                cur_s = ds
                cur_e = de
                have = True
        else:
            i += 1
    if have:
        a = 0 if cur_s == 0 else cur_s + h
        z = n - 1 if cur_e == n - 1 else cur_e - h
        for j in range(a, z + 1):
            out[j] = 1
    return out


def close_run_counts(bits, w_values):
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] b = np.ascontiguousarray(bits, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ws = np.ascontiguousarray(w_values, dtype=np.int64)
    cdef long n = b.shape[0]
    cdef long nw = ws.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(nw, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] gaps = np.empty(n, dtype=np.int64)
    cdef long r = 0, ngaps = 0
    cdef long i = 0, prev_end = -1, s
    while i < n:
        if b[i]:
            s = i
            while i < n and b[i]:
                i += 1
            if r > 0:
                gaps[ngaps] = s - prev_end - 1
                ngaps += 1
            prev_end = i - 1
            r += 1
        else:
            i += 1
    cdef long k, g, cnt
    for k in range(nw):
        cnt = r
        for g in range(ngaps):
            if gaps[g] <= ws[k] - 1:
                cnt -= 1
        out[k] = cnt
    return out


# ---------------------------------------------------------------------------
# CART forest
# ---------------------------------------------------------------------------


cdef void _sort_pairs(double *v, int *lab, long lo, long hi) nogil:
    # quicksort on parallel arrays; ties in v are order-irrelevant downstream
    cdef long i, j
    cdef double pivot, tv
    cdef int tl
    while hi - lo > 16:
        pivot = v[lo + (hi - lo) // 2]
        i = lo
        j = hi
        while i <= j:
            while v[i] < pivot:
                i += 1
            while v[j] > pivot:
                j -= 1
            if i <= j:
                tv = v[i]; v[i] = v[j]; v[j] = tv
                tl = lab[i]; lab[i] = lab[j]; lab[j] = tl
                i += 1
                j -= 1
        if j - lo < hi - i:
            _sort_pairs(v, lab, lo, j)
            lo = i
        else:
            _sort_pairs(v, lab, i, hi)
            hi = j
    for i in range(lo + 1, hi + 1):
        tv = v[i]
        tl = lab[i]
        j = i - 1
        while j >= lo and v[j] > tv:
            v[j + 1] = v[j]
            lab[j + 1] = lab[j]
            j -= 1
        v[j + 1] = tv
        lab[j + 1] = tl


def grow_forest(X, y, int n_trees, int mtry, seed):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] yc = np.ascontiguousarray(y, dtype=np.int32)
    cdef long n = Xc.shape[0]
    cdef long p = Xc.shape[1]
    cdef u64 master = <u64>(seed & 0xFFFFFFFFFFFFFFFF)

    cdef long cap = 2 * n + 2
    cdef cnp.ndarray[cnp.int32_t, ndim=1] feat = np.empty(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] thr = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] left = np.empty(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] right = np.empty(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] value = np.empty(cap, dtype=np.int32)

    cdef cnp.ndarray[cnp.int64_t, ndim=1] oob_pos = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] oob_tot = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] offsets = np.zeros(n_trees + 1, dtype=np.int64)

    cdef long *samples = <long *>malloc(n * sizeof(long))
    cdef long *scratch = <long *>malloc(2 * n * sizeof(long))
    cdef double *vbuf = <double *>malloc(n * sizeof(double))
    cdef int *lbuf = <int *>malloc(n * sizeof(int))
    cdef long *pool = <long *>malloc(p * sizeof(long))
    cdef char *inbag = <char *>malloc(n * sizeof(char))
    # stack of (node, start, end, c0, c1)
    cdef long *stack = <long *>malloc(5 * (2 * n + 4) * sizeof(long))

    feats_l, thrs_l, lefts_l, rights_l, values_l = [], [], [], [], []

    cdef u64 state
    cdef long t, i, j, k, m, node, start, end, c0, c1, n_nodes, sp
    cdef long kf, f, pos, ml, cl1, cl0, cr0, cr1, best_feat, best_ml, best_cl1
    cdef long lid, rid, a, b, cnt1, nl, nr
    cdef double best_score, best_thr, score, mid
    cdef long cum1
    cdef int mt = mtry if mtry < p else <int>p

    for t in range(n_trees):
        state = _mix(master + (<u64>(t + 1)) * GOLDEN)
        for i in range(n):
            inbag[i] = 0
        for i in range(n):
            j = _randint(&state, n)
            samples[i] = j
            inbag[j] = 1
        # root
        n_nodes = 1
        feat[0] = -1
        thr[0] = 0.0
        left[0] = -1
        right[0] = -1
        value[0] = -1
        c1 = 0
        for i in range(n):
            if yc[samples[i]] == 1:
                c1 += 1
        sp = 0
        stack[0] = 0
        stack[1] = 0
        stack[2] = n
        stack[3] = n - c1
        stack[4] = c1
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[5 * sp]
            start = stack[5 * sp + 1]
            end = stack[5 * sp + 2]
            c0 = stack[5 * sp + 3]
            c1 = stack[5 * sp + 4]
            m = end - start
            if c0 == 0 or c1 == 0 or m < 2:
                value[node] = 0 if c0 >= c1 else 1
                continue
            for i in range(p):
                pool[i] = i
            best_score = -1.0
            best_feat = -1
            best_thr = 0.0
            best_ml = 0
            best_cl1 = 0
            for kf in range(mt):
                j = kf + _randint(&state, p - kf)
                i = pool[kf]; pool[kf] = pool[j]; pool[j] = i
                f = pool[kf]
                for i in range(m):
                    vbuf[i] = Xc[samples[start + i], f]
                    lbuf[i] = yc[samples[start + i]]
                _sort_pairs(vbuf, lbuf, 0, m - 1)
                cum1 = 0
                for k in range(m - 1):
                    if lbuf[k] == 1:
                        cum1 += 1
                    if vbuf[k] < vbuf[k + 1]:
                        ml = k + 1
                        cl1 = cum1
                        cl0 = ml - cl1
                        cr1 = c1 - cl1
                        cr0 = (m - ml) - cr1
                        score = (<double>(cl0 * cl0 + cl1 * cl1)) / (<double>ml) \
                            + (<double>(cr0 * cr0 + cr1 * cr1)) / (<double>(m - ml))
                        if score > best_score:
                            best_score = score
                            best_feat = f
                            mid = 0.5 * (vbuf[k] + vbuf[k + 1])
                            if mid == vbuf[k + 1]:
                                mid = vbuf[k]
                            best_thr = mid
                            best_ml = ml
                            best_cl1 = cl1
            if best_feat < 0:
                value[node] = 0 if c0 >= c1 else 1
                continue
            # stable partition by x <= thr
            nl = 0
            nr = 0
            for i in range(start, end):
                if Xc[samples[i], best_feat] <= best_thr:
                    scratch[nl] = samples[i]
                    nl += 1
                else:
                    scratch[m + nr] = samples[i]  # second half of scratch
                    nr += 1
            for i in range(nl):
                samples[start + i] = scratch[i]
            for i in range(nr):
                samples[start + nl + i] = scratch[m + i]
            lid = n_nodes
            rid = n_nodes + 1
            n_nodes += 2
            feat[lid] = -1; thr[lid] = 0.0; left[lid] = -1; right[lid] = -1; value[lid] = -1
            feat[rid] = -1; thr[rid] = 0.0; left[rid] = -1; right[rid] = -1; value[rid] = -1
            feat[node] = <int>best_feat
            thr[node] = best_thr
            left[node] = <int>lid
            right[node] = <int>rid
            value[node] = -1
            ml = best_ml
            cl1 = best_cl1
            stack[5 * sp] = rid
            stack[5 * sp + 1] = start + ml
            stack[5 * sp + 2] = end
            stack[5 * sp + 3] = (m - ml) - (c1 - cl1)
            stack[5 * sp + 4] = c1 - cl1
            sp += 1
            stack[5 * sp] = lid
            stack[5 * sp + 1] = start
            stack[5 * sp + 2] = start + ml
            stack[5 * sp + 3] = ml - cl1
            stack[5 * sp + 4] = cl1
            sp += 1
        feats_l.append(feat[:n_nodes].copy())
        thrs_l.append(thr[:n_nodes].copy())
        lefts_l.append(left[:n_nodes].copy())
        rights_l.append(right[:n_nodes].copy())
        values_l.append(value[:n_nodes].copy())
        offsets[t + 1] = offsets[t] + n_nodes
        # OOB tallies
        for i in range(n):
            if not inbag[i]:
                node = 0
                while feat[node] >= 0:
                    if Xc[i, feat[node]] <= thr[node]:
                        node = left[node]
                    else:
                        node = right[node]
                oob_pos[i] += value[node]
                oob_tot[i] += 1

    free(samples); free(scratch); free(vbuf); free(lbuf); free(pool); free(inbag); free(stack)
    return (
        np.concatenate(feats_l),
        np.concatenate(thrs_l),
        np.concatenate(lefts_l),
        np.concatenate(rights_l),
        np.concatenate(values_l),
        offsets,
        oob_pos,
        oob_tot,
    )


def forest_apply(feat, thr, left, right, value, offsets, X):
    cdef cnp.ndarray[cnp.int32_t, ndim=1] fc = np.ascontiguousarray(feat, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tc = np.ascontiguousarray(thr, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] lc = np.ascontiguousarray(left, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] rc = np.ascontiguousarray(right, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] vc = np.ascontiguousarray(value, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] oc = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef long m = Xc.shape[0]
    cdef long nt = oc.shape[0] - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pos = np.zeros(m, dtype=np.int64)
    cdef long t, i, node, base
    for t in range(nt):
        base = oc[t]
        for i in range(m):
            node = base
            while fc[node] >= 0:
                if Xc[i, fc[node]] <= tc[node]:
                    node = base + lc[node]
                else:
                    node = base + rc[node]
            pos[i] += vc[node]
    return pos
