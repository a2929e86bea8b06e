"""Compiled tree-growing kernels.

Both growers work on a shared presorted index matrix ``idx`` of shape (d, n):
idx[f] holds the node's row ids sorted by feature f. Nodes are contiguous
segments [s, e) of that matrix; splitting partitions every feature's segment
stably in place, so no per-node sorting is needed.

Boundaries are evaluated only between distinct consecutive sorted values, in
ascending threshold order, and a strictly better score is required to replace
the incumbent; with features scanned in ascending index order this realizes
the (lower feature, lower threshold) tie-break.
"""

import math

import numpy as np
from numba import njit

CRIT_HELLINGER = 0
CRIT_ENTROPY = 1
CRIT_GINI = 2


@njit(cache=True)
def _splitmix64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _hellinger_mean(counts_left, counts_node, k, sl, sr):
    # Mean pairwise two-class distance over the classes present at the node;
    # each class is normalized by its own node total, so the value depends
    # only on within-class partition proportions.
    for c in range(k):
        total_c = counts_node[c]
        if total_c > 0:
            sl[c] = math.sqrt(counts_left[c] / total_c)
            sr[c] = math.sqrt((total_c - counts_left[c]) / total_c)
    acc = 0.0
    pairs = 0
    for a in range(k):
        if counts_node[a] == 0:
            continue
        for b in range(a + 1, k):
            if counts_node[b] == 0:
                continue
            dl = sl[a] - sl[b]
            dr = sr[a] - sr[b]
            acc += math.sqrt(dl * dl + dr * dr)
            pairs += 1
    if pairs == 0:
        return 0.0
    return acc / pairs


@njit(cache=True)
def _impurity(counts, k, total, crit_id):
    if total <= 0:
        return 0.0
    if crit_id == CRIT_ENTROPY:
        h = 0.0
        for c in range(k):
            if counts[c] > 0:
                p = counts[c] / total
                h -= p * math.log(p)
        return h / math.log(2.0)
    g = 1.0
    for c in range(k):
        p = counts[c] / total
        g -= p * p
    return g


@njit(cache=True)
def _gain(counts_left, counts_node, k, n_left, m, parent_imp, crit_id):
    n_right = m - n_left
    if crit_id == CRIT_ENTROPY:
        hl = 0.0
        hr = 0.0
        for c in range(k):
            cl = counts_left[c]
            cr = counts_node[c] - cl
            if cl > 0:
                p = cl / n_left
                hl -= p * math.log(p)
            if cr > 0:
                p = cr / n_right
                hr -= p * math.log(p)
        child = (n_left / m) * (hl / math.log(2.0)) + (n_right / m) * (hr / math.log(2.0))
        return parent_imp - child
    gl = 1.0
    gr = 1.0
    for c in range(k):
        pl = counts_left[c] / n_left
        pr = (counts_node[c] - counts_left[c]) / n_right
        gl -= pl * pl
        gr -= pr * pr
    return parent_imp - (n_left / m) * gl - (n_right / m) * gr


@njit(cache=True)
def grow_classification(
    XT, y, k, idx, max_depth, min_leaf, min_split, crit_id, feats_per_node, seed
):
    """Grow one classification tree; returns node arrays plus per-node class counts.

    max_depth < 0 means unbounded. Any valid boundary may be chosen even at
    zero score, so induction only stops on purity, size limits, depth, or
    constant features.
    """
    d, n = XT.shape
    cap = 2 * n
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    child_l = np.full(cap, -1, np.int32)
    child_r = np.full(cap, -1, np.int32)
    counts_out = np.zeros((cap, k), np.int64)

    stack_node = np.empty(cap + 1, np.int32)
    stack_s = np.empty(cap + 1, np.int64)
    stack_e = np.empty(cap + 1, np.int64)
    stack_d = np.empty(cap + 1, np.int64)

    perm = np.empty(d, np.int64)
    counts_node = np.zeros(k, np.int64)
    counts_left = np.zeros(k, np.int64)
    sl = np.zeros(k, np.float64)
    sr = np.zeros(k, np.float64)
    is_left = np.zeros(n, np.uint8)
    tmp = np.empty(n, np.int32)

    state = seed
    n_nodes = 1
    stack_node[0] = 0
    stack_s[0] = 0
    stack_e[0] = n
    stack_d[0] = 0
    top = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        s = stack_s[top]
        e = stack_e[top]
        depth = stack_d[top]
        m = e - s

        for c in range(k):
            counts_node[c] = 0
        for i in range(s, e):
            counts_node[y[idx[0, i]]] += 1
        for c in range(k):
            counts_out[node, c] = counts_node[c]

        present = 0
        for c in range(k):
            if counts_node[c] > 0:
                present += 1
        if m < min_split or present <= 1 or (max_depth >= 0 and depth >= max_depth):
            continue

        fs = feats_per_node
        if fs > d:
            fs = d
        if fs < d:
            for i in range(d):
                perm[i] = i
            for i in range(fs):
                state, z = _splitmix64(state)
                j = i + np.int64(z % np.uint64(d - i))
                swap = perm[i]
                perm[i] = perm[j]
                perm[j] = swap
            for a in range(1, fs):
                v = perm[a]
                b = a - 1
                while b >= 0 and perm[b] > v:
                    perm[b + 1] = perm[b]
                    b -= 1
                perm[b + 1] = v
        else:
            for i in range(d):
                perm[i] = i

        parent_imp = 0.0
        if crit_id != CRIT_HELLINGER:
            parent_imp = _impurity(counts_node, k, m, crit_id)

        best_score = -1.0
        best_f = -1
        best_i = np.int64(-1)
        for ci in range(fs):
            f = perm[ci]
            for c in range(k):
                counts_left[c] = 0
            n_left = 0
            for i in range(s, e - 1):
                r = idx[f, i]
                counts_left[y[r]] += 1
                n_left += 1
                if XT[f, r] == XT[f, idx[f, i + 1]]:
                    continue
                if n_left < min_leaf or (m - n_left) < min_leaf:
                    continue
                if crit_id == CRIT_HELLINGER:
                    score = _hellinger_mean(counts_left, counts_node, k, sl, sr)
                else:
                    score = _gain(
                        counts_left, counts_node, k, n_left, m, parent_imp, crit_id
                    )
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_i = i
        if best_f < 0:
            continue

        v = XT[best_f, idx[best_f, best_i]]
        v_next = XT[best_f, idx[best_f, best_i + 1]]
        thr = 0.5 * (v + v_next)
        if not (thr < v_next):
            thr = v

        n_left = best_i - s + 1
        for i in range(s, best_i + 1):
            is_left[idx[best_f, i]] = 1
        for f in range(d):
            li = 0
            ri = n_left
            for i in range(s, e):
                r = idx[f, i]
                if is_left[r] == 1:
                    tmp[li] = r
                    li += 1
                else:
                    tmp[ri] = r
                    ri += 1
            for i2 in range(m):
                idx[f, s + i2] = tmp[i2]
        for i in range(s, s + n_left):
            is_left[idx[0, i]] = 0

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = thr
        child_l[node] = lid
        child_r[node] = rid

        stack_node[top] = rid
        stack_s[top] = s + n_left
        stack_e[top] = e
        stack_d[top] = depth + 1
        top += 1
        stack_node[top] = lid
        stack_s[top] = s
        stack_e[top] = s + n_left
        stack_d[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        child_l[:n_nodes],
        child_r[:n_nodes],
        counts_out[:n_nodes],
    )


@njit(cache=True)
def grow_regression(XT, g, h, idx, max_depth, min_leaf, l2_lambda):
    """Grow one second-order regression tree on per-row (gradient, hessian).

    Split gain is 0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)); node value
    is -G/(H+l). Returns node arrays, per-node values, and the leaf id each
    training row lands in.
    """
    d, n = XT.shape
    cap = 2 * n
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    child_l = np.full(cap, -1, np.int32)
    child_r = np.full(cap, -1, np.int32)
    value = np.zeros(cap, np.float64)
    leaf_of = np.empty(n, np.int32)

    stack_node = np.empty(cap + 1, np.int32)
    stack_s = np.empty(cap + 1, np.int64)
    stack_e = np.empty(cap + 1, np.int64)
    stack_d = np.empty(cap + 1, np.int64)

    is_left = np.zeros(n, np.uint8)
    tmp = np.empty(n, np.int32)

    n_nodes = 1
    stack_node[0] = 0
    stack_s[0] = 0
    stack_e[0] = n
    stack_d[0] = 0
    top = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        s = stack_s[top]
        e = stack_e[top]
        depth = stack_d[top]
        m = e - s

        g_sum = 0.0
        h_sum = 0.0
        for i in range(s, e):
            r = idx[0, i]
            g_sum += g[r]
            h_sum += h[r]
        denom = h_sum + l2_lambda
        if denom > 0.0:
            value[node] = -g_sum / denom
        else:
            value[node] = 0.0

        best_gain = 1e-12
        best_f = -1
        best_i = np.int64(-1)
        if m >= 2 and (max_depth < 0 or depth < max_depth):
            parent_term = 0.0
            if denom > 0.0:
                parent_term = g_sum * g_sum / denom
            for f in range(d):
                gl = 0.0
                hl = 0.0
                n_left = 0
                for i in range(s, e - 1):
                    r = idx[f, i]
                    gl += g[r]
                    hl += h[r]
                    n_left += 1
                    if XT[f, r] == XT[f, idx[f, i + 1]]:
                        continue
                    if n_left < min_leaf or (m - n_left) < min_leaf:
                        continue
                    dl = hl + l2_lambda
                    dr = (h_sum - hl) + l2_lambda
                    if dl <= 0.0 or dr <= 0.0:
                        continue
                    gr = g_sum - gl
                    gain = 0.5 * (gl * gl / dl + gr * gr / dr - parent_term)
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_i = i
        if best_f < 0:
            for i in range(s, e):
                leaf_of[idx[0, i]] = node
            continue

        v = XT[best_f, idx[best_f, best_i]]
        v_next = XT[best_f, idx[best_f, best_i + 1]]
        thr = 0.5 * (v + v_next)
        if not (thr < v_next):
            thr = v

        n_left = best_i - s + 1
        for i in range(s, best_i + 1):
            is_left[idx[best_f, i]] = 1
        for f in range(d):
            li = 0
            ri = n_left
            for i in range(s, e):
                r = idx[f, i]
                if is_left[r] == 1:
                    tmp[li] = r
                    li += 1
                else:
                    tmp[ri] = r
                    ri += 1
            for i2 in range(m):
                idx[f, s + i2] = tmp[i2]
        for i in range(s, s + n_left):
            is_left[idx[0, i]] = 0

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = thr
        child_l[node] = lid
        child_r[node] = rid

        stack_node[top] = rid
        stack_s[top] = s + n_left
        stack_e[top] = e
        stack_d[top] = depth + 1
        top += 1
        stack_node[top] = lid
        stack_s[top] = s
        stack_e[top] = s + n_left
        stack_d[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        child_l[:n_nodes],
        child_r[:n_nodes],
        value[:n_nodes],
        leaf_of,
    )
