"""Compiled inner loops for CART growth and traversal.

One builder serves every tree in the package: Gini impurity on a {0, 1}
label equals twice the variance of that label, so classification trees are
grown as single-output variance trees and only differ in how leaves are read.
"""
import numpy as np
from numba import njit

_GAIN_TOL = 1e-12


@njit(cache=True, nogil=True)
def _better(gain, f, thr, best_gain, best_f, best_thr):
    tol = _GAIN_TOL * max(1.0, abs(best_gain))
    if gain > best_gain + tol:
        return True
    if gain >= best_gain - tol:
        if f < best_f:
            return True
        if f == best_f and thr < best_thr:
            return True
    return False


@njit(cache=True, nogil=True)
def build_tree(X, Y, idx, max_depth, min_leaf, max_features, rand):
    """Grow a variance-reduction tree on rows ``idx`` (repeats act as weights).

    ``rand`` supplies uniforms for per-node feature shuffling; it is only read
    when ``max_features < n_features``. Nodes are numbered in depth-first,
    left-first preorder, and so are leaves.
    """
    n_feat = X.shape[1]
    d = Y.shape[1]
    m_all = idx.shape[0]
    cap = 2 * m_all + 1

    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    leaf_id = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, d), dtype=np.float64)
    n_node = np.zeros(cap, dtype=np.float64)
    impurity = np.zeros(cap, dtype=np.float64)
    gain_arr = np.zeros(cap, dtype=np.float64)

    samples = idx.copy()
    buf = np.empty(m_all, dtype=np.int64)
    # stack entries: start, end, depth, parent, is_left
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_parent = np.empty(cap, dtype=np.int64)
    st_isleft = np.empty(cap, dtype=np.int64)
    sp = 0
    st_start[0] = 0
    st_end[0] = m_all
    st_depth[0] = 0
    st_parent[0] = -1
    st_isleft[0] = 0
    sp = 1

    perm = np.arange(n_feat)
    tot = np.empty(d)
    lsum = np.empty(d)
    vals = np.empty(m_all)
    n_nodes = 0
    n_leaves = 0
    rpos = 0
    n_rand = rand.shape[0]

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        parent = st_parent[sp]
        is_left = st_isleft[sp]

        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                left[parent] = node
            else:
                right[parent] = node

        m = end - start
        for k in range(d):
            tot[k] = 0.0
        sumsq = 0.0
        for i in range(start, end):
            r = samples[i]
            for k in range(d):
                y = Y[r, k]
                tot[k] += y
                sumsq += y * y
        tot_score = 0.0
        for k in range(d):
            value[node, k] = tot[k] / m
            tot_score += tot[k] * tot[k]
        tot_score /= m
        imp = (sumsq - tot_score) / m
        if imp < 0.0:
            imp = 0.0
        n_node[node] = m
        impurity[node] = imp

        best_gain = 0.0
        best_f = n_feat
        best_thr = np.inf
        found = False
        if depth < max_depth and m >= 2 * min_leaf and imp > 1e-14:
            for j in range(n_feat):
                perm[j] = j
            if max_features < n_feat:
                for j in range(n_feat - 1, 0, -1):
                    u = rand[rpos % n_rand]
                    rpos += 1
                    k2 = int(u * (j + 1))
                    if k2 > j:
                        k2 = j
                    tmp = perm[j]
                    perm[j] = perm[k2]
                    perm[k2] = tmp
            visited = 0
            for jj in range(n_feat):
                if visited >= max_features:
                    break
                f = perm[jj]
                for i in range(m):
                    vals[i] = X[samples[start + i], f]
                order = np.argsort(vals[:m], kind="mergesort")
                if vals[order[0]] == vals[order[m - 1]]:
                    continue
                visited += 1
                for k in range(d):
                    lsum[k] = 0.0
                for i in range(m - 1):
                    r = samples[start + order[i]]
                    for k in range(d):
                        lsum[k] += Y[r, k]
                    nl = i + 1
                    nr = m - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    v0 = vals[order[i]]
                    v1 = vals[order[i + 1]]
                    if v0 == v1:
                        continue
                    score = 0.0
                    for k in range(d):
                        rs = tot[k] - lsum[k]
                        score += lsum[k] * lsum[k] / nl + rs * rs / nr
                    g = score - tot_score
                    thr = 0.5 * (v0 + v1)
                    if thr <= v0:
                        thr = v1
                    if g > 0.0 and _better(g, f, thr, best_gain, best_f, best_thr):
                        best_gain = g
                        best_f = f
                        best_thr = thr
                        found = True

        if found and best_gain > _GAIN_TOL * max(1.0, sumsq):
            feature[node] = best_f
            threshold[node] = best_thr
            gain_arr[node] = best_gain
            # stable partition: x < thr to the left
            nl = 0
            for i in range(start, end):
                if X[samples[i], best_f] < best_thr:
                    nl += 1
            li = start
            ri = start + nl
            for i in range(start, end):
                r = samples[i]
                if X[r, best_f] < best_thr:
                    buf[li] = r
                    li += 1
                else:
                    buf[ri] = r
                    ri += 1
            for i in range(start, end):
                samples[i] = buf[i]
            mid = start + nl
            # right pushed first so left is numbered first
            st_start[sp] = mid
            st_end[sp] = end
            st_depth[sp] = depth + 1
            st_parent[sp] = node
            st_isleft[sp] = 0
            sp += 1
            st_start[sp] = start
            st_end[sp] = mid
            st_depth[sp] = depth + 1
            st_parent[sp] = node
            st_isleft[sp] = 1
            sp += 1
        else:
            leaf_id[node] = n_leaves
            n_leaves += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            leaf_id[:n_nodes].copy(), value[:n_nodes].copy(),
            n_node[:n_nodes].copy(), impurity[:n_nodes].copy(),
            gain_arr[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
