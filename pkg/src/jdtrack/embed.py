"""Appearance embeddings: cosine distance, batch-hard triplet mining and the triplet loss.

No network is trained here. These functions take embedding vectors as data
and produce exactly what a training loop would consume: the mined index
triples and the hinge loss over them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .io import UNIT_NORM_TOL, Detection


class NoValidBatchError(RuntimeError):
    pass


def normalize(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalise a zero or non-finite vector")
    return vec / norm


def check_embedding(vec, dim: int | None = None, tol: float = UNIT_NORM_TOL) -> np.ndarray:
    """Validate a unit-norm, finite vector (optionally of a fixed dimension)."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {vec.shape}")
    if dim is not None and vec.size != dim:
        raise ValueError(f"embedding dimension {vec.size} != {dim}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding has non-finite components")
    if abs(np.linalg.norm(vec) - 1.0) > tol:
        raise ValueError(f"embedding is not unit norm (|e| = {np.linalg.norm(vec):.9f})")
    return vec


def cosine_distance(a, b) -> float:
    """``1 - <a, b>`` for unit vectors, clipped to [0, 2]."""
    return float(min(max(1.0 - float(np.dot(a, b)), 0.0), 2.0))


def squared_distance(a, b) -> float:
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.dot(diff, diff))


@dataclass(frozen=True)
class MiningParams:
    batch_frames: int = 8  # B
    window: int = 16  # D
    min_identities: int = 8  # P
    min_instances: int = 4  # K
    margin: float = 0.2
    retry_budget: int = 100

    def __post_init__(self):
        if not 1 <= self.batch_frames <= self.window:
            raise ValueError("need 1 <= batch_frames <= window")
        if self.min_identities < 2 or self.min_instances < 2:
            raise ValueError("min_identities and min_instances must be >= 2")
        if not self.margin > 0:
            raise ValueError("margin must be > 0")
        if self.retry_budget < 1:
            raise ValueError("retry_budget must be >= 1")


@dataclass(frozen=True)
class LabeledBatch:
    embeddings: np.ndarray  # (n, dim)
    identities: np.ndarray  # (n,)
    frames: np.ndarray  # (n,)

    def __post_init__(self):
        n = len(self.embeddings)
        if len(self.identities) != n or len(self.frames) != n:
            raise ValueError("embeddings, identities and frames differ in length")

    @classmethod
    def from_items(cls, items: Sequence[tuple]) -> "LabeledBatch":
        """Build from ``(embedding, identity, frame)`` tuples."""
        if not items:
            return cls(np.zeros((0, 0)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        embs, ids, frames = zip(*items)
        return cls(np.vstack(embs).astype(np.float64), np.asarray(ids), np.asarray(frames))

    def __len__(self):
        return len(self.identities)

    def identity_counts(self) -> dict:
        labels, counts = np.unique(self.identities, return_counts=True)
        return dict(zip(labels.tolist(), counts.tolist()))

    def is_valid(self, params: MiningParams) -> bool:
        """At least P identities with at least K instances each."""
        enough = sum(1 for c in self.identity_counts().values() if c >= params.min_instances)
        return enough >= params.min_identities


def mine_hard_triplets(batch: LabeledBatch) -> list[tuple[int, int, int]]:
    """Hardest positive (farthest same identity) and negative (nearest other identity)
    for every anchor, by squared Euclidean distance.

    Ties go to the lowest item index. Anchors lacking a positive or a
    negative in the batch are skipped.
    """
    n = len(batch)
    if n == 0:
        return []
    _, labels = np.unique(batch.identities, return_inverse=True)
    labels = labels.reshape(-1)
    dist = kernels.pairwise_sqdist(batch.embeddings)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    other = labels[:, None] != labels[None, :]
    pos = np.argmax(np.where(same, dist, -np.inf), axis=1)
    neg = np.argmin(np.where(other, dist, np.inf), axis=1)
    has = same.any(axis=1) & other.any(axis=1)
    return [(a, int(pos[a]), int(neg[a])) for a in range(n) if has[a]]


def _triplet_terms(triplets, embeddings, margin):
    emb = np.asarray(embeddings, dtype=np.float64)
    idx = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if idx.size and (idx.min() < 0 or idx.max() >= len(emb)):
        raise IndexError("triplet index out of range")
    d_ap = np.sum((emb[idx[:, 0]] - emb[idx[:, 1]]) ** 2, axis=1)
    d_an = np.sum((emb[idx[:, 0]] - emb[idx[:, 2]]) ** 2, axis=1)
    return d_ap - d_an + margin


def triplet_loss(triplets, embeddings, margin: float) -> float:
    """Mean over triplets of ``[|a-p|^2 - |a-n|^2 + margin]_+``."""
    if len(triplets) == 0:
        raise ValueError("triplet loss is undefined for an empty triplet list")
    terms = _triplet_terms(triplets, embeddings, margin)
    return float(np.mean(np.maximum(terms, 0.0)))


def margin_satisfied(a, p, n, margin: float, strict: bool = True) -> bool:
    """Whether the anchor is closer to the positive than the negative by ``margin``.

    ``strict`` uses ``<``; the non-strict form (``<=``) is exactly the
    condition under which the triplet contributes zero loss.
    """
    slack = squared_distance(a, p) - squared_distance(a, n) + margin
    return slack < 0.0 if strict else slack <= 0.0


def margin_violation_fraction(triplets, embeddings, margin: float) -> float:
    if len(triplets) == 0:
        return 0.0
    return float(np.mean(_triplet_terms(triplets, embeddings, margin) > 0.0))


def sample_batch(sequence: Mapping[int, Sequence[Detection]], params: MiningParams,
                 seed) -> LabeledBatch:
    """Draw B frames from a random window of D consecutive frames.

    A new window is drawn until the batch holds P identities with K
    instances each, up to ``params.retry_budget`` attempts. Only detections
    with an identity (``track_id >= 0``) and an embedding are used.
    """
    frames = sorted(sequence)
    if len(frames) < params.window:
        raise ValueError(f"sequence has {len(frames)} frames, need at least {params.window}")
    rng = np.random.default_rng(seed)
    n_windows = len(frames) - params.window + 1
    for _ in range(params.retry_budget):
        start = int(rng.integers(n_windows))
        window = frames[start:start + params.window]
        picked = np.sort(rng.choice(params.window, size=params.batch_frames, replace=False))
        items = [(d.embedding, d.track_id, d.frame)
                 for k in picked for d in sequence[window[k]]
                 if d.track_id >= 0 and d.embedding is not None]
        batch = LabeledBatch.from_items(items)
        if batch.is_valid(params):
            return batch
    raise NoValidBatchError(
        f"no valid batch after {params.retry_budget} attempts "
        f"(need {params.min_identities} identities x {params.min_instances} instances)"
    )
