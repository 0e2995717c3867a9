"""Pure-numpy kernels.

Vectorised with broadcasting where the operation allows it. The assignment
solver keeps its O(n) outer loops in Python but vectorises every row scan.
Results agree with the numba backend to floating-point rounding; the
assignment solver produces identical matchings on both.
"""
import numpy as np

_I4 = np.eye(4)
_I8 = np.eye(8)


def iou_matrix(a, b):
    """IoU of every box in ``a`` (n, 4) against every box in ``b`` (m, 4)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix1 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy1 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix2 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy2 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(ix2 - ix1, 0.0, None) * np.clip(iy2 - iy1, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def cosine_distance_matrix(ea, eb):
    dots = np.asarray(ea, dtype=np.float64) @ np.asarray(eb, dtype=np.float64).T
    return np.clip(1.0 - dots, 0.0, 2.0)


def cost_matrix(track_boxes, track_embs, det_boxes, det_embs, alpha, beta):
    """alpha * (1 - IoU) + beta * (1 - cos) for every track/detection pair.

    With ``beta == 0`` the embedding arguments are ignored and may have
    zero columns.
    """
    cost = alpha * (1.0 - iou_matrix(track_boxes, det_boxes))
    if beta != 0.0:
        cost = cost + beta * cosine_distance_matrix(track_embs, det_embs)
    return cost


def pairwise_sqdist(x):
    """Squared Euclidean distance between all rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def clamp_boxes(mean, min_size):
    """Widen any box in the corner block of ``mean`` narrower than ``min_size``.

    The box is re-centred on its midpoint. Operates in place and returns
    ``mean``.
    """
    for lo, hi in ((0, 2), (1, 3)):
        narrow = (mean[:, hi] - mean[:, lo]) < min_size
        if narrow.any():
            centre = 0.5 * (mean[narrow, lo] + mean[narrow, hi])
            mean[narrow, lo] = centre - 0.5 * min_size
            mean[narrow, hi] = centre + 0.5 * min_size
    return mean


def kf_predict_batch(mean, cov, q_pos, q_vel):
    """Constant-velocity prediction for a stack of (8,) states and (8, 8) covariances."""
    new_mean = mean.copy()
    new_mean[:, :4] = mean[:, :4] + mean[:, 4:]
    pp = cov[:, :4, :4]
    pv = cov[:, :4, 4:]
    vp = cov[:, 4:, :4]
    vv = cov[:, 4:, 4:]
    new_cov = np.empty_like(cov)
    new_cov[:, :4, :4] = pp + pv + vp + vv + q_pos * q_pos * _I4
    new_cov[:, :4, 4:] = pv + vv
    new_cov[:, 4:, :4] = vp + vv
    new_cov[:, 4:, 4:] = vv + q_vel * q_vel * _I4
    return new_mean, new_cov


def kf_update_batch(mean, cov, z, r):
    """Kalman correction with the four corner positions observed.

    Covariance uses the Joseph form and is re-symmetrised.
    """
    r2 = r * r
    s = cov[:, :4, :4] + r2 * _I4
    pht = cov[:, :, :4]
    gain = np.linalg.solve(s, np.transpose(pht, (0, 2, 1)))
    gain = np.transpose(gain, (0, 2, 1))
    innov = z - mean[:, :4]
    new_mean = mean + np.einsum("nij,nj->ni", gain, innov)
    ikh = np.broadcast_to(_I8, cov.shape).copy()
    ikh[:, :, :4] -= gain
    new_cov = ikh @ cov @ np.transpose(ikh, (0, 2, 1))
    new_cov += r2 * (gain @ np.transpose(gain, (0, 2, 1)))
    new_cov = 0.5 * (new_cov + np.transpose(new_cov, (0, 2, 1)))
    return new_mean, new_cov


def blend_embeddings(emb, rows, fresh, momentum):
    """Running average of unit vectors, renormalised; in place on ``emb[rows]``.

    A blend that cancels to (near) zero falls back to the fresh vector.
    """
    mixed = momentum * emb[rows] + (1.0 - momentum) * fresh
    norms = np.sqrt(np.einsum("ij,ij->i", mixed, mixed))
    degenerate = norms < 1e-12
    mixed[degenerate] = fresh[degenerate]
    norms[degenerate] = 1.0
    emb[rows] = mixed / norms[:, None]
    return emb


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
        free = ~used[:n]
        cur = c[i0] - u[i0] - v
        better = free & (cur < minv)
        minv[better] = cur[better]
        way[better] = j0
        masked = np.where(free, minv, np.inf)
        j1 = int(np.argmin(masked))
        delta = masked[j1]
        used_cols = np.flatnonzero(used[:n])
        u[p[used_cols]] += delta
        u[i] += delta
        v[used_cols] -= delta
        minv[free] -= delta
        j0 = j1
        if p[j0] == -1:
            break
    while j0 != n:
        j1 = way[j0]
        p[j0] = p[j1]
        j0 = j1
    col_to_row[:] = p[:n]


def _reroute(eq, row_to_col, col_to_row, i, j):
    """Try to give column ``j`` to row ``i`` keeping rows < i fixed."""
    n = eq.shape[0]
    target = row_to_col[i]
    start = col_to_row[j]
    seen = np.zeros(n, dtype=np.bool_)
    seen[j] = True
    via = np.full(n, -1, dtype=np.int64)
    queue = [start]
    head = 0
    found = False
    while head < len(queue) and not found:
        a = queue[head]
        head += 1
        for k in np.flatnonzero(eq[a] & ~seen):
            via[k] = a
            if k == target:
                found = True
                break
            holder = col_to_row[k]
            seen[k] = True
            if holder > i:
                queue.append(holder)
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


def linear_assignment(cost, tol):
    """Minimum-cost perfect matching on a square matrix.

    Returns ``row_to_col``. Among optimal matchings (reduced cost within
    ``tol`` of zero) the lexicographically smallest column sequence is
    returned.
    """
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    row_to_col = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return row_to_col
    u = c.min(axis=1)
    v = np.zeros(n)
    col_to_row = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        cand = np.flatnonzero((c[i] == u[i]) & (col_to_row < 0))
        if cand.size:
            col_to_row[cand[0]] = i
    for i in range(n):
        if i not in col_to_row:
            _augment_row(c, u, v, col_to_row, i)
    row_to_col[col_to_row] = np.arange(n)

    eq = (c - u[:, None] - v[None, :]) <= tol
    for i in range(n):
        for j in np.flatnonzero(eq[i, : row_to_col[i]]):
            if col_to_row[j] < i:
                continue
            if _reroute(eq, row_to_col, col_to_row, i, j):
                break
    return row_to_col
