"""Compiled inner loops for tree growth and SMO.

Everything here works on plain arrays; the estimator classes own validation
and bookkeeping.
"""

import numpy as np
from numba import njit

TAU = 1e-12


@njit(cache=True)
def _best_split(X, y, idx, start, end, f, min_leaf, total, best_score, xs, ys):
    m = end - start
    for j in range(m):
        xs[j] = X[idx[start + j], f]
    order = np.argsort(xs[:m], kind="mergesort")
    for j in range(m):
        ys[j] = y[idx[start + order[j]]]
    found = False
    best_pos = -1
    left_sum = 0.0
    for i in range(m - 1):
        left_sum += ys[i]
        n_left = i + 1
        if n_left < min_leaf:
            continue
        if m - n_left < min_leaf:
            break
        lo = xs[order[i]]
        hi = xs[order[i + 1]]
        if not lo < hi:
            continue
        right_sum = total - left_sum
        score = left_sum * left_sum / n_left + right_sum * right_sum / (m - n_left)
        if score > best_score:
            best_score = score
            best_pos = i
            found = True
    threshold = 0.0
    if found:
        lo = xs[order[best_pos]]
        hi = xs[order[best_pos + 1]]
        threshold = 0.5 * (lo + hi)
        if threshold >= hi or threshold < lo:
            threshold = lo
    return found, best_score, threshold


@njit(cache=True)
def build_tree(X, y, sample_idx, max_depth, min_leaf, max_features, seed):
    """Grow a CART regression tree by exhaustive variance-reduction splits.

    ``max_depth < 0`` means unbounded. Candidate features per node are a
    random subset of size ``max_features`` scanned in ascending index order;
    if none of them admits a split the remaining features are tried one at a
    time. Ties keep the lowest feature index, then the lowest threshold.
    Returns (feature, threshold, left, right, value, n_node, gain), where
    ``gain`` is the node's reduction in summed squared error.
    """
    np.random.seed(seed)
    n = sample_idx.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    gain = np.zeros(cap)

    idx = sample_idx.copy()
    buf = np.empty(n, np.int64)
    xs = np.empty(n)
    ys = np.empty(n)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node = np.empty(cap, np.int64)

    node_count = 1
    sp = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        node = st_node[sp]
        m = end - start
        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for j in range(start, end):
            v = y[idx[j]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = total / m
        count[node] = m
        if m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or ymin == ymax:
            continue

        if max_features < d:
            perm = np.random.permutation(d)
            chosen = np.sort(perm[:max_features])
        else:
            perm = np.arange(d)
            chosen = perm
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        for f in chosen:
            ok, score, thr = _best_split(X, y, idx, start, end, f, min_leaf, total, best_score, xs, ys)
            if ok:
                best_score = score
                best_f = f
                best_thr = thr
        if best_f < 0 and max_features < d:
            for k in range(max_features, d):
                f = perm[k]
                ok, score, thr = _best_split(X, y, idx, start, end, f, min_leaf, total, -np.inf, xs, ys)
                if ok:
                    best_score = score
                    best_f = f
                    best_thr = thr
                    break
        if best_f < 0:
            continue

        # stable partition: x <= threshold goes left
        n_left = 0
        n_right = 0
        for j in range(start, end):
            s = idx[j]
            if X[s, best_f] <= best_thr:
                idx[start + n_left] = s
                n_left += 1
            else:
                buf[n_right] = s
                n_right += 1
        for j in range(n_right):
            idx[start + n_left + j] = buf[j]

        g = best_score - total * total / m
        gain[node] = g if g > 0.0 else 0.0
        feature[node] = best_f
        threshold[node] = best_thr
        lc = node_count
        rc = node_count + 1
        node_count += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is numbered next (preorder)
        st_start[sp] = start + n_left
        st_end[sp] = end
        st_depth[sp] = depth + 1
        st_node[sp] = rc
        sp += 1
        st_start[sp] = start
        st_end[sp] = start + n_left
        st_depth[sp] = depth + 1
        st_node[sp] = lc
        sp += 1

    k = node_count
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(), right[:k].copy(),
            value[:k].copy(), count[:k].copy(), gain[:k].copy())


@njit(cache=True)
def predict_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


@njit(cache=True)
def rbf_kernel(A, B, gamma):
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            s = 0.0
            for k in range(A.shape[1]):
                t = A[i, k] - B[j, k]
                s += t * t
            out[i, j] = np.exp(-gamma * s)
    return out


@njit(cache=True)
def smo_epsilon_svr(K, z, C, eps, tol, max_iter):
    """Solve the epsilon-SVR dual with SMO and second-order working-set selection.

    Variables are ``a`` (label +1) and ``s`` (label -1), one pair per sample;
    the problem is min 1/2 (a-s)'K(a-s) + eps*sum(a+s) - z'(a-s) subject to
    sum(a-s) = 0 and 0 <= a, s <= C. Stops when the maximal KKT violation
    drops below ``tol``. Returns (coef, rho, iterations, max_violation) with
    ``coef = a - s``; predictions are ``K @ coef - rho``.
    """
    n = z.shape[0]
    a = np.zeros(n)
    s = np.zeros(n)
    Ga = np.empty(n)
    Gs = np.empty(n)
    for t in range(n):
        Ga[t] = eps - z[t]
        Gs[t] = eps + z[t]

    it = 0
    violation = np.inf
    while True:
        # i: maximal violator in the "up" set; label +1 entries use -Ga,
        # label -1 entries use Gs.
        gmax = -np.inf
        ki = -1
        yi = 0.0
        for t in range(n):
            if a[t] < C and -Ga[t] >= gmax:
                gmax = -Ga[t]
                ki = t
                yi = 1.0
            if s[t] > 0.0 and Gs[t] >= gmax:
                gmax = Gs[t]
                ki = t
                yi = -1.0
        gmax2 = -np.inf
        kj = -1
        yj = 0.0
        obj_min = np.inf
        if ki >= 0:
            kii = K[ki, ki]
            row = K[ki]
            for t in range(n):
                quad = kii + K[t, t] - 2.0 * row[t]
                if quad <= 0.0:
                    quad = TAU
                if a[t] > 0.0:
                    g = Ga[t]
                    if g >= gmax2:
                        gmax2 = g
                    diff = gmax + g
                    if diff > 0.0:
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            kj = t
                            yj = 1.0
                if s[t] < C:
                    g = -Gs[t]
                    if g >= gmax2:
                        gmax2 = g
                    diff = gmax + g
                    if diff > 0.0:
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            kj = t
                            yj = -1.0
        violation = gmax + gmax2
        if ki < 0 or kj < 0 or violation < tol or it >= max_iter:
            break
        it += 1

        ai = a[ki] if yi > 0 else s[ki]
        aj = a[kj] if yj > 0 else s[kj]
        gi = Ga[ki] if yi > 0 else Gs[ki]
        gj = Ga[kj] if yj > 0 else Gs[kj]
        old_ai = ai
        old_aj = aj
        q_ij = yi * yj * K[ki, kj]
        if yi != yj:
            quad = K[ki, ki] + K[kj, kj] + 2.0 * q_ij
            if quad <= 0.0:
                quad = TAU
            delta = (-gi - gj) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0.0:
                if aj < 0.0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = -diff
            if diff > 0.0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            quad = K[ki, ki] + K[kj, kj] - 2.0 * q_ij
            if quad <= 0.0:
                quad = TAU
            delta = (gi - gj) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0.0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = total
        if yi > 0:
            a[ki] = ai
        else:
            s[ki] = ai
        if yj > 0:
            a[kj] = aj
        else:
            s[kj] = aj

        wi = yi * (ai - old_ai)
        wj = yj * (aj - old_aj)
        row_i = K[ki]
        row_j = K[kj]
        for t in range(n):
            u = wi * row_i[t] + wj * row_j[t]
            Ga[t] += u
            Gs[t] -= u

    # bias from free variables, or the midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    acc = 0.0
    nfree = 0
    for t in range(n):
        yg = Ga[t]
        if a[t] >= C:
            lb = max(lb, yg)
        elif a[t] <= 0.0:
            ub = min(ub, yg)
        else:
            nfree += 1
            acc += yg
        yg = -Gs[t]
        if s[t] >= C:
            ub = min(ub, yg)
        elif s[t] <= 0.0:
            lb = max(lb, yg)
        else:
            nfree += 1
            acc += yg
    if nfree > 0:
        rho = acc / nfree
    else:
        rho = 0.5 * (ub + lb)
    return a - s, rho, it, violation
