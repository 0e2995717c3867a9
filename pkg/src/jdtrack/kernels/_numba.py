"""numba-compiled kernels.

Same contracts as ``_numpy``. Loops are written out explicitly; fastmath is
off so results stay reproducible and IEEE-exact where the tests need it.
"""
import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")


@njit(**_OPTS)
def _iou(a0, a1, a2, a3, b0, b1, b2, b3):
    iw = min(a2, b2) - max(a0, b0)
    ih = min(a3, b3) - max(a1, b1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a2 - a0) * (a3 - a1) + (b2 - b0) * (b3 - b1) - inter
    return inter / union


@njit(**_OPTS)
def _iou_matrix(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = _iou(a[i, 0], a[i, 1], a[i, 2], a[i, 3],
                             b[j, 0], b[j, 1], b[j, 2], b[j, 3])
    return out


def iou_matrix(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    return _iou_matrix(a, b)


@njit(**_OPTS)
def _clip_distance(dots):
    out = np.empty_like(dots)
    for i in range(dots.shape[0]):
        for j in range(dots.shape[1]):
            out[i, j] = min(max(1.0 - dots[i, j], 0.0), 2.0)
    return out


def _dots(ea, eb):
    # numba cannot reach BLAS without scipy; the product goes through numpy
    return np.ascontiguousarray(np.asarray(ea, dtype=np.float64)
                                @ np.asarray(eb, dtype=np.float64).T)


def cosine_distance_matrix(ea, eb):
    return _clip_distance(_dots(ea, eb))


@njit(**_OPTS)
def _cost_matrix(tb, db, dots, alpha, beta):
    t = tb.shape[0]
    m = db.shape[0]
    out = np.empty((t, m))
    for i in range(t):
        for j in range(m):
            c = alpha * (1.0 - _iou(tb[i, 0], tb[i, 1], tb[i, 2], tb[i, 3],
                                    db[j, 0], db[j, 1], db[j, 2], db[j, 3]))
            if beta != 0.0:
                c += beta * min(max(1.0 - dots[i, j], 0.0), 2.0)
            out[i, j] = c
    return out


def cost_matrix(track_boxes, track_embs, det_boxes, det_embs, alpha, beta):
    tb = np.ascontiguousarray(track_boxes, dtype=np.float64).reshape(-1, 4)
    db = np.ascontiguousarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    if beta != 0.0:
        dots = _dots(track_embs, det_embs)
    else:
        dots = np.zeros((tb.shape[0], db.shape[0]))
    return _cost_matrix(tb, db, dots, float(alpha), float(beta))


@njit(**_OPTS)
def _pairwise_sqdist(x):
    n = x.shape[0]
    d = x.shape[1]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                s += diff * diff
            out[i, j] = s
            out[j, i] = s
    return out


def pairwise_sqdist(x):
    return _pairwise_sqdist(np.ascontiguousarray(x, dtype=np.float64))


@njit(**_OPTS)
def clamp_boxes(mean, min_size):
    for t in range(mean.shape[0]):
        for lo in range(2):
            hi = lo + 2
            if mean[t, hi] - mean[t, lo] < min_size:
                centre = 0.5 * (mean[t, lo] + mean[t, hi])
                mean[t, lo] = centre - 0.5 * min_size
                mean[t, hi] = centre + 0.5 * min_size
    return mean


@njit(**_OPTS)
def kf_predict_batch(mean, cov, q_pos, q_vel):
    n = mean.shape[0]
    new_mean = mean.copy()
    new_cov = np.empty_like(cov)
    qp = q_pos * q_pos
    qv = q_vel * q_vel
    for t in range(n):
        for a in range(4):
            new_mean[t, a] = mean[t, a] + mean[t, a + 4]
        for a in range(4):
            for b in range(4):
                pp = cov[t, a, b]
                pv = cov[t, a, b + 4]
                vp = cov[t, a + 4, b]
                vv = cov[t, a + 4, b + 4]
                new_cov[t, a, b] = pp + pv + vp + vv
                new_cov[t, a, b + 4] = pv + vv
                new_cov[t, a + 4, b] = vp + vv
                new_cov[t, a + 4, b + 4] = vv
            new_cov[t, a, a] += qp
            new_cov[t, a + 4, a + 4] += qv
    return new_mean, new_cov


@njit(**_OPTS)
def kf_update_batch(mean, cov, z, r):
    n = mean.shape[0]
    r2 = r * r
    new_mean = np.empty_like(mean)
    new_cov = np.empty_like(cov)
    chol = np.zeros((4, 4))
    gain = np.empty((8, 4))
    x = np.empty((4, 8))
    m = np.empty((8, 8))
    for t in range(n):
        # Cholesky factor of the innovation covariance S = HPH' + R
        for a in range(4):
            for b in range(a + 1):
                acc = cov[t, a, b] + (r2 if a == b else 0.0)
                for k in range(b):
                    acc -= chol[a, k] * chol[b, k]
                if a == b:
                    chol[a, a] = np.sqrt(acc)
                else:
                    chol[a, b] = acc / chol[b, b]
        # X = S^-1 H P by forward then backward substitution; K = X'
        for c in range(8):
            for a in range(4):
                acc = cov[t, a, c]
                for k in range(a):
                    acc -= chol[a, k] * x[k, c]
                x[a, c] = acc / chol[a, a]
            for a in range(3, -1, -1):
                acc = x[a, c]
                for k in range(a + 1, 4):
                    acc -= chol[k, a] * x[k, c]
                x[a, c] = acc / chol[a, a]
        for a in range(8):
            for b in range(4):
                gain[a, b] = x[b, a]
        for a in range(8):
            acc = 0.0
            for b in range(4):
                acc += gain[a, b] * (z[t, b] - mean[t, b])
            new_mean[t, a] = mean[t, a] + acc
        # Joseph form (I - KH) P (I - KH)' + K R K'
        for a in range(8):
            for c in range(8):
                acc = cov[t, a, c]
                for b in range(4):
                    acc -= gain[a, b] * cov[t, b, c]
                m[a, c] = acc
        for a in range(8):
            for d in range(a + 1):
                acc = m[a, d]
                for b in range(4):
                    acc -= m[a, b] * gain[d, b]
                    acc += r2 * gain[a, b] * gain[d, b]
                new_cov[t, a, d] = acc
        for a in range(8):
            for d in range(a):
                new_cov[t, d, a] = new_cov[t, a, d]
    return new_mean, new_cov


@njit(**_OPTS)
def blend_embeddings(emb, rows, fresh, momentum):
    d = emb.shape[1]
    for k in range(rows.shape[0]):
        i = rows[k]
        norm = 0.0
        for c in range(d):
            v = momentum * emb[i, c] + (1.0 - momentum) * fresh[k, c]
            emb[i, c] = v
            norm += v * v
        norm = np.sqrt(norm)
        if norm < 1e-12:
            for c in range(d):
                emb[i, c] = fresh[k, c]
        else:
            for c in range(d):
                emb[i, c] /= norm
    return emb


@njit(**_OPTS)
def _augment_row(c, u, v, col_to_row, i):
    n = c.shape[0]
    p = np.empty(n + 1, dtype=np.int64)
    p[:n] = col_to_row
    p[n] = i
    minv = np.full(n, np.inf)
    way = np.full(n, -1, dtype=np.int64)
    used = np.zeros(n + 1, dtype=np.bool_)
    j0 = n
    while True:
        used[j0] = True
        i0 = p[j0]
        delta = np.inf
        j1 = -1
        for j in range(n):
            if not used[j]:
                cur = c[i0, j] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
        for j in range(n):
            if used[j]:
                u[p[j]] += delta
                v[j] -= delta
            else:
                minv[j] -= delta
        u[i] += delta
        j0 = j1
        if p[j0] == -1:
            break
    while j0 != n:
        j1 = way[j0]
        p[j0] = p[j1]
        j0 = j1
    col_to_row[:] = p[:n]


@njit(**_OPTS)
def _reroute(eq, row_to_col, col_to_row, i, j):
    n = eq.shape[0]
    target = row_to_col[i]
    start = col_to_row[j]
    seen = np.zeros(n, dtype=np.bool_)
    seen[j] = True
    via = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    queue[0] = start
    head = 0
    tail = 1
    found = False
    while head < tail and not found:
        a = queue[head]
        head += 1
        for k in range(n):
            if eq[a, k] and not seen[k]:
                via[k] = a
                if k == target:
                    found = True
                    break
                seen[k] = True
                holder = col_to_row[k]
                if holder > i:
                    queue[tail] = holder
                    tail += 1
    if not found:
        return False
    k = target
    while True:
        a = via[k]
        old = row_to_col[a]
        row_to_col[a] = k
        col_to_row[k] = a
        if a == start:
            break
        k = old
    row_to_col[i] = j
    col_to_row[j] = i
    return True


@njit(**_OPTS)
def _linear_assignment(c, tol):
    n = c.shape[0]
    row_to_col = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return row_to_col
    u = np.empty(n)
    for i in range(n):
        u[i] = c[i].min()
    v = np.zeros(n)
    col_to_row = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if c[i, j] == u[i] and col_to_row[j] < 0:
                col_to_row[j] = i
                row_to_col[i] = j
                break
    for i in range(n):
        if row_to_col[i] < 0:
            _augment_row(c, u, v, col_to_row, i)
            for j in range(n):
                if col_to_row[j] >= 0:
                    row_to_col[col_to_row[j]] = j

    eq = np.empty((n, n), dtype=np.bool_)
    for i in range(n):
        for j in range(n):
            eq[i, j] = (c[i, j] - u[i] - v[j]) <= tol
    for i in range(n):
        for j in range(row_to_col[i]):
            if eq[i, j] and col_to_row[j] > i:
                if _reroute(eq, row_to_col, col_to_row, i, j):
                    break
    return row_to_col


def linear_assignment(cost, tol):
    return _linear_assignment(np.ascontiguousarray(cost, dtype=np.float64), float(tol))
