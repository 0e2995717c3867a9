"""Online tracker: predict, associate, update, manage track lifecycles.

Track state lives in parallel arrays (means, covariances, embeddings,
counters) so that every stage of a frame is one batched kernel call.
:class:`Track` objects are snapshots built on request.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import kalman, kernels
from .assoc import CostParams, cost_matrix_from_arrays, gate_and_assign
from .embed import check_embedding
from .geometry import BBox, array_to_boxes
from .io import Detection
from .kalman import KalmanParams, KalmanState

STAGES = ("predict", "matrix", "solve", "update")


class TrackerError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerParams:
    cost: CostParams = field(default_factory=CostParams)
    kalman: KalmanParams = field(default_factory=KalmanParams)
    max_age: int = 30
    min_hits: int = 1
    emb_momentum: float = 0.9
    score_floor: float = 0.0
    image_size: tuple | None = None  # (width, height) for clamping proposals

    def __post_init__(self):
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")
        if self.min_hits < 1:
            raise ValueError("min_hits must be >= 1")
        if not 0.0 <= self.emb_momentum <= 1.0:
            raise ValueError("emb_momentum must lie in [0, 1]")
        if self.image_size is not None:
            w, h = self.image_size
            if not (w >= 1 and h >= 1):
                raise ValueError("image_size must be at least 1 x 1")

    @property
    def uses_appearance(self) -> bool:
        return self.cost.beta > 0.0


class TrackStatus(enum.Enum):
    ACTIVE = "active"
    LOST = "lost"


@dataclass(frozen=True)
class Track:
    id: int
    state: KalmanState
    embedding: np.ndarray | None
    hits: int
    age: int
    time_since_update: int
    confidence: float

    @property
    def status(self) -> TrackStatus:
        return TrackStatus.LOST if self.time_since_update >= 1 else TrackStatus.ACTIVE

    @property
    def bbox(self) -> BBox:
        return self.state.box


class FrameResult:
    """Reported tracks of one frame and the proposals for the next.

    Backed by arrays; ``outputs`` and ``proposals`` are built on first access.
    """

    def __init__(self, frame: int, ids, boxes, confidences, proposal_boxes):
        self.frame = frame
        self.ids = np.asarray(ids, dtype=np.int64)
        self.boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        self.confidences = np.asarray(confidences, dtype=np.float64)
        self.proposal_boxes = np.asarray(proposal_boxes, dtype=np.float64).reshape(-1, 4)
        self._outputs = None
        self._proposals = None

    @property
    def outputs(self) -> list[tuple[int, BBox, float]]:
        if self._outputs is None:
            self._outputs = [(int(i), BBox(*b), float(c))
                             for i, b, c in zip(self.ids, self.boxes, self.confidences)]
        return self._outputs

    @property
    def proposals(self) -> list[BBox]:
        if self._proposals is None:
            self._proposals = array_to_boxes(self.proposal_boxes)
        return self._proposals

    def as_detections(self) -> list[Detection]:
        return [Detection(self.frame, box, conf, tid) for tid, box, conf in self.outputs]

    def __eq__(self, other):
        if not isinstance(other, FrameResult):
            return NotImplemented
        return (self.frame == other.frame and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.boxes, other.boxes)
                and np.array_equal(self.confidences, other.confidences)
                and np.array_equal(self.proposal_boxes, other.proposal_boxes))

    def __repr__(self):
        return f"FrameResult(frame={self.frame}, ids={self.ids.tolist()})"


@dataclass
class TimingRecord:
    """Per-frame stage wall times in milliseconds."""

    frames: list = field(default_factory=list)
    stages: dict = field(default_factory=lambda: {s: [] for s in STAGES})

    def add(self, frame, ns_by_stage):
        self.frames.append(frame)
        for s in STAGES:
            self.stages[s].append(ns_by_stage[s] / 1e6)

    @property
    def total(self) -> list:
        return [sum(v) for v in zip(*(self.stages[s] for s in STAGES))]

    def summary(self) -> dict:
        out = {}
        for name, values in list(self.stages.items()) + [("total", self.total)]:
            arr = np.asarray(values, dtype=np.float64)
            out[name] = {
                "mean_ms": float(arr.mean()) if arr.size else 0.0,
                "max_ms": float(arr.max()) if arr.size else 0.0,
            }
        total_s = sum(self.total) / 1e3
        out["fps"] = len(self.frames) / total_s if total_s > 0 else 0.0
        return out

    def to_dict(self) -> dict:
        return {"frames": list(self.frames),
                "per_frame_ms": {s: list(v) for s, v in self.stages.items()},
                "summary": self.summary()}


def _clip_boxes(boxes: np.ndarray, width: float, height: float, min_size: float = 1.0):
    out = boxes.copy()
    for lo, hi, limit in ((0, 2, width), (1, 3, height)):
        a = np.maximum(out[:, lo], 0.0)
        b = np.minimum(out[:, hi], limit)
        narrow = (b - a) < min_size
        centre = np.clip(0.5 * (a + b), 0.5 * min_size, limit - 0.5 * min_size)
        out[:, lo] = np.where(narrow, centre - 0.5 * min_size, a)
        out[:, hi] = np.where(narrow, centre + 0.5 * min_size, b)
    return out


class Tracker:
    """Single-sequence tracker. Not thread-safe; use one instance per sequence."""

    def __init__(self, params: TrackerParams | None = None):
        self.params = params or TrackerParams()
        self._next_id = 1
        self._last_frame = None
        self._dim = None
        self._ids = np.zeros(0, dtype=np.int64)
        self._mean = np.zeros((0, 8))
        self._cov = np.zeros((0, 8, 8))
        self._emb = np.zeros((0, 0))
        self._hits = np.zeros(0, dtype=np.int64)
        self._age = np.zeros(0, dtype=np.int64)
        self._tsu = np.zeros(0, dtype=np.int64)
        self._conf = np.zeros(0)
        self._proposals = np.zeros((0, 4))
        self.last_stage_ns = dict.fromkeys(STAGES, 0)

    # -- inspection -------------------------------------------------------

    def __len__(self):
        return len(self._ids)

    @property
    def tracks(self) -> list[Track]:
        use_emb = self.params.uses_appearance and self._dim is not None
        return [Track(int(self._ids[k]),
                      KalmanState(self._mean[k].copy(), self._cov[k].copy()),
                      self._emb[k].copy() if use_emb else None,
                      int(self._hits[k]), int(self._age[k]), int(self._tsu[k]),
                      float(self._conf[k]))
                for k in range(len(self._ids))]

    def proposals_for_next_frame(self) -> list[BBox]:
        """Predicted boxes of every live track (Active and Lost) for the next frame."""
        return array_to_boxes(self._proposals)

    def set_track_state(self, track_id: int, mean) -> None:
        """Overwrite a live track's state mean (scripted scenarios and tests)."""
        k = int(np.flatnonzero(self._ids == track_id)[0])
        self._mean[k] = np.asarray(mean, dtype=np.float64)
        self._proposals = self._predicted_proposals()

    # -- one frame --------------------------------------------------------

    def _validate(self, frame, detections):
        if int(frame) != frame:
            raise TrackerError(f"frame index must be an integer, got {frame!r}")
        if self._last_frame is not None and frame <= self._last_frame:
            raise TrackerError(
                f"frame {frame} does not follow previous frame {self._last_frame}")
        need_emb = self.params.uses_appearance
        for k, d in enumerate(detections):
            if not isinstance(d, Detection):
                raise TrackerError(f"frame {frame}: detection {k} is not a Detection")
            if d.frame != frame:
                raise TrackerError(f"frame {frame}: detection {k} is stamped frame {d.frame}")
            if need_emb:
                if d.embedding is None:
                    raise TrackerError(f"frame {frame}: detection {k} has no embedding "
                                       "(required when beta > 0)")
                try:
                    check_embedding(d.embedding, self._dim)
                except ValueError as exc:
                    raise TrackerError(f"frame {frame}: detection {k}: {exc}") from None
                if self._dim is None:
                    self._dim = len(d.embedding)

    def _predicted_proposals(self):
        boxes = kalman.predicted_boxes(self._mean)
        if self.params.image_size is not None:
            boxes = _clip_boxes(boxes, *self.params.image_size)
        return boxes

    def step(self, frame: int, detections: list[Detection]) -> FrameResult:
        self._validate(frame, detections)
        p = self.params
        clock = time.perf_counter_ns
        t0 = clock()

        n = len(self._ids)
        if n:
            self._mean, self._cov = kalman.predict_batch(self._mean, self._cov, p.kalman)
        t1 = clock()

        m = len(detections)
        det_boxes = np.empty((m, 4))
        for k, d in enumerate(detections):
            b = d.bbox
            det_boxes[k] = (b.x1, b.y1, b.x2, b.y2)
        if p.uses_appearance and m:
            det_embs = np.vstack([d.embedding for d in detections])
        else:
            det_embs = np.zeros((m, 0))
        track_embs = self._emb if p.uses_appearance and self._dim else np.zeros((n, 0))
        cost = cost_matrix_from_arrays(self._mean[:, :4], track_embs, det_boxes, det_embs,
                                       p.cost)
        t2 = clock()

        assignment = gate_and_assign(cost, p.cost)
        t3 = clock()

        self._apply(assignment, detections, det_boxes, det_embs)
        self._proposals = self._predicted_proposals()
        live = (self._tsu == 0) & (self._hits >= p.min_hits)
        result = FrameResult(int(frame), self._ids[live], self._mean[live, :4],
                             self._conf[live], self._proposals)
        t4 = clock()

        self._last_frame = frame
        self.last_stage_ns = {"predict": t1 - t0, "matrix": t2 - t1,
                              "solve": t3 - t2, "update": t4 - t3}
        return result

    def _apply(self, assignment, detections, det_boxes, det_embs):
        p = self.params
        rows = np.array([t for t, _, _ in assignment.matches], dtype=np.int64)
        cols = np.array([d for _, d, _ in assignment.matches], dtype=np.int64)
        if rows.size:
            self._mean[rows], self._cov[rows] = kalman.update_batch(
                self._mean[rows], self._cov[rows], det_boxes[cols], p.kalman)
            if p.uses_appearance:
                kernels.blend_embeddings(self._emb, rows, np.ascontiguousarray(det_embs[cols]),
                                         p.emb_momentum)
            self._hits[rows] += 1
            self._tsu[rows] = 0
            self._conf[rows] = [detections[j].score for j in cols]
        self._age += 1
        if assignment.unmatched_tracks:
            self._tsu[np.asarray(assignment.unmatched_tracks, dtype=np.int64)] += 1

        keep = self._tsu <= p.max_age
        if not keep.all():
            self._ids, self._mean, self._cov = self._ids[keep], self._mean[keep], self._cov[keep]
            self._hits, self._age, self._tsu = self._hits[keep], self._age[keep], self._tsu[keep]
            self._conf = self._conf[keep]
            if self._emb.shape[0]:
                self._emb = self._emb[keep]

        born = [j for j in assignment.unmatched_detections
                if detections[j].score >= p.score_floor]
        if born:
            b = np.asarray(born, dtype=np.int64)
            mean, cov = kalman.init_batch(det_boxes[b], p.kalman)
            new_ids = np.arange(self._next_id, self._next_id + b.size, dtype=np.int64)
            self._next_id += b.size
            self._ids = np.concatenate([self._ids, new_ids])
            self._mean = np.concatenate([self._mean, mean])
            self._cov = np.concatenate([self._cov, cov])
            self._hits = np.concatenate([self._hits, np.ones(b.size, dtype=np.int64)])
            self._age = np.concatenate([self._age, np.zeros(b.size, dtype=np.int64)])
            self._tsu = np.concatenate([self._tsu, np.zeros(b.size, dtype=np.int64)])
            self._conf = np.concatenate([self._conf, [detections[j].score for j in born]])
            if p.uses_appearance:
                fresh = det_embs[b]
                self._emb = fresh.copy() if self._emb.shape[0] == 0 else np.concatenate(
                    [self._emb, fresh])


def _frame_items(stream):
    if isinstance(stream, Mapping):
        return sorted(stream.items())
    return list(stream)


def run_sequence(stream, params: TrackerParams | None = None,
                 last_frame: int | None = None) -> tuple[list[FrameResult], TimingRecord]:
    """Track every frame from 1 to the last frame of ``stream``.

    ``stream`` maps frame -> detections (or yields ``(frame, detections)``);
    frames absent from it are stepped with no detections so lost tracks age
    correctly.
    """
    items = dict(_frame_items(stream))
    end = max(items, default=0) if last_frame is None else last_frame
    tracker = Tracker(params)
    results, timing = [], TimingRecord()
    for frame in range(1, end + 1):
        try:
            results.append(tracker.step(frame, items.get(frame, [])))
        except TrackerError:
            raise
        except (ValueError, IndexError) as exc:
            raise TrackerError(f"frame {frame}: {exc}") from exc
        timing.add(frame, tracker.last_stage_ns)
    return results, timing


def results_to_detections(results: Iterable[FrameResult]) -> list[Detection]:
    return [d for r in results for d in r.as_detections()]
