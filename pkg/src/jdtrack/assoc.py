"""Track/detection association: weighted IoU + cosine cost, optimal matching, gating."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .embed import cosine_distance
from .geometry import BBox, boxes_to_array, iou_distance


@dataclass(frozen=True)
class CostParams:
    alpha: float = 0.5  # weight on IoU distance
    beta: float = 0.5  # weight on cosine distance
    max_cost: float = 0.7

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or not self.alpha + self.beta > 0:
            raise ValueError("need alpha >= 0, beta >= 0 and alpha + beta > 0")
        if not self.max_cost > 0:
            raise ValueError("max_cost must be > 0")


@dataclass
class Assignment:
    matches: list = field(default_factory=list)  # (track_index, detection_index, cost)
    unmatched_tracks: list = field(default_factory=list)
    unmatched_detections: list = field(default_factory=list)


def pair_cost(track_box: BBox, track_emb, det_box: BBox, det_emb, p: CostParams) -> float:
    cost = p.alpha * iou_distance(track_box, det_box)
    if p.beta != 0.0:
        cost += p.beta * cosine_distance(track_emb, det_emb)
    return cost


def _stack_embeddings(items, n):
    if n == 0:
        return np.zeros((0, 0))
    return np.vstack([np.asarray(it.embedding, dtype=np.float64) for it in items])


def build_cost_matrix(tracks, detections, p: CostParams) -> np.ndarray:
    """(T, D) cost matrix; items need ``bbox`` and, when ``p.beta > 0``, ``embedding``."""
    tb = boxes_to_array([t.bbox for t in tracks])
    db = boxes_to_array([d.bbox for d in detections])
    if p.beta != 0.0 and len(tracks) and len(detections):
        te = _stack_embeddings(tracks, len(tracks))
        de = _stack_embeddings(detections, len(detections))
    else:
        te = np.zeros((len(tracks), 0))
        de = np.zeros((len(detections), 0))
    return cost_matrix_from_arrays(tb, te, db, de, p)


def cost_matrix_from_arrays(track_boxes, track_embs, det_boxes, det_embs,
                            p: CostParams) -> np.ndarray:
    t, d = len(track_boxes), len(det_boxes)
    if t == 0 or d == 0:
        return np.zeros((t, d))
    beta = p.beta if track_embs.shape[-1] else 0.0
    return kernels.cost_matrix(track_boxes, track_embs, det_boxes, det_embs, p.alpha, beta)


def hungarian_solve(cost) -> list[tuple[int, int]]:
    """Minimum-total-cost matching of size min(T, D).

    Rectangular input is padded to square with a large finite constant.
    Among equal-cost optima the lexicographically smallest (row, col)
    sequence wins, so results are reproducible.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains NaN or infinite entries")
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return []
    n = max(rows, cols)
    scale = float(np.abs(cost).max())
    if rows != cols:
        sentinel = (n + 1) * (scale + 1.0)
        padded = np.full((n, n), sentinel)
        padded[:rows, :cols] = cost
    else:
        padded = cost
    row_to_col = kernels.linear_assignment(padded, 1e-10 * max(1.0, scale))
    return [(i, int(row_to_col[i])) for i in range(rows) if row_to_col[i] < cols]


def gate_and_assign(cost, p: CostParams) -> Assignment:
    """Optimal matching, then drop any matched pair costing more than ``p.max_cost``."""
    cost = np.asarray(cost, dtype=np.float64)
    rows, cols = cost.shape
    out = Assignment()
    matched_rows = set()
    matched_cols = set()
    for i, j in hungarian_solve(cost):
        c = float(cost[i, j])
        if c <= p.max_cost:
            out.matches.append((i, j, c))
            matched_rows.add(i)
            matched_cols.add(j)
    out.unmatched_tracks = [i for i in range(rows) if i not in matched_rows]
    out.unmatched_detections = [j for j in range(cols) if j not in matched_cols]
    return out
