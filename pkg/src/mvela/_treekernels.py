"""Compiled tree-traversal kernels (numba), with availability flag.

The kernels walk every row through every tree sequentially in tree order,
so their floating-point accumulation matches the pure-numpy fallback in
`forest` bit for bit; parallelism is only over independent rows.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import config as _numba_config
    from numba import njit, prange

    # The default OpenMP layer is not fork-safe and the pipeline parallelizes
    # with forked processes; workqueue tolerates forking.
    _numba_config.THREADING_LAYER = "workqueue"

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range


@njit(cache=True, parallel=True)
def apply_regression(feature, threshold, left, right, value, offsets, X):
    n = X.shape[0]
    n_trees = offsets.size - 1
    out = np.empty(n)
    for i in prange(n):
        acc = 0.0
        for t in range(n_trees):
            node = offsets[t]
            f = feature[node]
            while f >= 0:
                if X[i, f] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feature[node]
            acc += value[node]
        out[i] = acc / n_trees
    return out


@njit(cache=True)
def _canonical_order(x):
    """Argsort with ties broken by position, matching a stable numpy argsort."""
    order = np.argsort(x)
    n = order.size
    i = 0
    while i < n - 1:
        if x[order[i]] == x[order[i + 1]]:
            j = i + 1
            while j < n and x[order[j]] == x[order[i]]:
                j += 1
            # insertion sort of the tied run (runs are short)
            for a in range(i + 1, j):
                key = order[a]
                b = a - 1
                while b >= i and order[b] > key:
                    order[b + 1] = order[b]
                    b -= 1
                order[b + 1] = key
            i = j
        else:
            i += 1
    return order


@njit(cache=True)
def grow_tree(X, y, codes, n_classes, idx0, subsets, use_subsets, max_depth, min_leaf):
    """Compiled twin of the reference CART builder in `forest`.

    Node ids follow creation order (children allocated when the parent
    splits), processing is depth-first with the left child first, and the
    candidate-subset cursor advances once per split search, exactly like the
    reference builder.
    """
    n0 = idx0.size
    p = X.shape[1]
    cap = 2 * n0 + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value_reg = np.zeros(cap)
    value_cls = np.zeros((cap, max(n_classes, 1)))

    arena = idx0.copy()
    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)

    n_nodes = 1
    subset_cursor = 0

    def _set_value(node, lo, hi):
        if n_classes == 0:
            s = 0.0
            for i in range(lo, hi):
                s += y[arena[i]]
            value_reg[node] = s / (hi - lo)
        else:
            for i in range(lo, hi):
                value_cls[node, codes[arena[i]]] += 1.0

    _set_value(0, 0, n0)
    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = n0
    stack_depth[sp] = 0
    sp += 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        nn = hi - lo

        if nn < 2 * min_leaf or nn < 2:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if n_classes == 0:
            y_lo = y[arena[lo]]
            pure = True
            for i in range(lo + 1, hi):
                if y[arena[i]] != y_lo:
                    pure = False
                    break
            if pure:
                continue
        else:
            c0 = codes[arena[lo]]
            pure = True
            for i in range(lo + 1, hi):
                if codes[arena[i]] != c0:
                    pure = False
                    break
            if pure:
                continue

        if use_subsets:
            candidates = subsets[subset_cursor]
            subset_cursor += 1
        else:
            candidates = np.arange(p)

        best_score = -np.inf
        best_f = -1
        best_pos = -1
        best_thr = 0.0

        xbuf = np.empty(nn)
        for ci in range(candidates.size):
            f = candidates[ci]
            for i in range(nn):
                xbuf[i] = X[arena[lo + i], f]
            order = _canonical_order(xbuf)

            feat_best_score = -np.inf
            feat_best_pos = -1
            if n_classes == 0:
                total = 0.0
                for i in range(nn):
                    total += y[arena[lo + order[i]]]
                cum = 0.0
                for j in range(1, nn):
                    cum += y[arena[lo + order[j - 1]]]
                    if xbuf[order[j - 1]] >= xbuf[order[j]]:
                        continue
                    if j < min_leaf or j > nn - min_leaf:
                        continue
                    rest = total - cum
                    score = cum * cum / j + rest * rest / (nn - j)
                    if score > feat_best_score:
                        feat_best_score = score
                        feat_best_pos = j
            else:
                counts_left = np.zeros(n_classes)
                counts_total = np.zeros(n_classes)
                for i in range(nn):
                    counts_total[codes[arena[lo + i]]] += 1.0
                for j in range(1, nn):
                    counts_left[codes[arena[lo + order[j - 1]]]] += 1.0
                    if xbuf[order[j - 1]] >= xbuf[order[j]]:
                        continue
                    if j < min_leaf or j > nn - min_leaf:
                        continue
                    sl = 0.0
                    sr = 0.0
                    for c in range(n_classes):
                        sl += counts_left[c] * counts_left[c]
                        cr = counts_total[c] - counts_left[c]
                        sr += cr * cr
                    score = sl / j + sr / (nn - j)
                    if score > feat_best_score:
                        feat_best_score = score
                        feat_best_pos = j

            if feat_best_pos >= 0 and feat_best_score > best_score:
                best_score = feat_best_score
                best_f = f
                best_pos = feat_best_pos

        if best_f < 0:
            continue

        for i in range(nn):
            xbuf[i] = X[arena[lo + i], best_f]
        order = _canonical_order(xbuf)
        a = xbuf[order[best_pos - 1]]
        b = xbuf[order[best_pos]]
        thr = a + (b - a) / 2.0
        if thr >= b:
            thr = a
        # reorder the arena slice by the split feature, then cut
        sorted_rows = np.empty(nn, dtype=np.int64)
        for i in range(nn):
            sorted_rows[i] = arena[lo + order[i]]
        for i in range(nn):
            arena[lo + i] = sorted_rows[i]
        mid = lo + best_pos

        feature[node] = best_f
        threshold[node] = thr
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = left_id
        right[node] = right_id
        _set_value(left_id, lo, mid)
        _set_value(right_id, mid, hi)

        stack_node[sp] = right_id
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = left_id
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value_reg[:n_nodes],
        value_cls[:n_nodes],
    )


@njit(cache=True, parallel=True)
def apply_classification(feature, threshold, left, right, proportions, offsets, X):
    n = X.shape[0]
    n_trees = offsets.size - 1
    n_classes = proportions.shape[1]
    out = np.zeros((n, n_classes))
    for i in prange(n):
        for t in range(n_trees):
            node = offsets[t]
            f = feature[node]
            while f >= 0:
                if X[i, f] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feature[node]
            for c in range(n_classes):
                out[i, c] += proportions[node, c]
        for c in range(n_classes):
            out[i, c] /= n_trees
    return out
