"""Synthetic scenes, oracle detections and a proposal-gated detector stub.

Objects move at constant velocity and bounce off the image border. Each
identity owns a random unit prototype vector; each observed instance is a
noisy, renormalised copy of it. Randomness is split into independent
streams (motion, appearance, detector noise) so that, for one seed,
switching detector noise on or off leaves trajectories unchanged.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .geometry import BBox, boxes_to_array
from .io import Detection, write_embeddings, write_mot
from .tracker import FrameResult, Tracker, TrackerParams


@dataclass(frozen=True, kw_only=True)
class ScenarioParams:
    seed: int
    width: float = 640.0
    height: float = 480.0
    n_objects: int = 8
    frames: int = 100
    speed_range: tuple = (1.0, 4.0)  # px/frame
    size_range: tuple = (30.0, 80.0)  # px, drawn independently for width and height
    occlusions: tuple = ()  # (start frame, duration, object id)
    dropout: float = 0.0
    jitter: float = 0.0  # px, std of per-corner box noise
    fp_rate: float = 0.0  # probability of one false positive per frame
    emb_dim: int = 128
    emb_noise: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "occlusions",
                           tuple(tuple(int(v) for v in ev) for ev in self.occlusions))
        object.__setattr__(self, "speed_range", tuple(float(v) for v in self.speed_range))
        object.__setattr__(self, "size_range", tuple(float(v) for v in self.size_range))
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ValueError("seed must be an integer")
        for name in ("dropout", "fp_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.jitter < 0 or self.emb_noise < 0:
            raise ValueError("jitter and emb_noise must be >= 0")
        if self.n_objects < 0 or self.frames < 1 or self.emb_dim < 1:
            raise ValueError("need n_objects >= 0, frames >= 1, emb_dim >= 1")
        lo, hi = self.size_range
        if not 1.0 <= lo <= hi or hi >= min(self.width, self.height):
            raise ValueError("size_range must satisfy 1 <= lo <= hi < image side")
        if not 0.0 <= self.speed_range[0] <= self.speed_range[1]:
            raise ValueError("speed_range must satisfy 0 <= lo <= hi")
        for start, duration, obj in self.occlusions:
            if duration < 1 or start < 1 or not 1 <= obj <= self.n_objects:
                raise ValueError(f"bad occlusion event {(start, duration, obj)}")

    @property
    def is_oracle(self) -> bool:
        return self.dropout == 0.0 and self.jitter == 0.0 and self.fp_rate == 0.0


@dataclass
class Scenario:
    params: ScenarioParams
    gt: dict  # frame -> [Detection] with track ids and instance embeddings
    detections: dict  # frame -> [Detection] with track_id -1 and embeddings
    prototypes: np.ndarray  # (n_objects, emb_dim)
    bounces: dict = field(default_factory=dict)  # object id -> sorted frames with a wall bounce

    def occluded(self, obj: int, frame: int) -> bool:
        return any(o == obj and s <= frame < s + d for s, d, o in self.params.occlusions)


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _trajectories(p: ScenarioParams, rng):
    n = p.n_objects
    sizes = rng.uniform(p.size_range[0], p.size_range[1], size=(n, 2))
    pos = np.column_stack([rng.uniform(0.0, p.width - sizes[:, 0]),
                           rng.uniform(0.0, p.height - sizes[:, 1])])
    speed = rng.uniform(p.speed_range[0], p.speed_range[1], size=n)
    heading = rng.uniform(0.0, 2.0 * np.pi, size=n)
    vel = np.column_stack([speed * np.cos(heading), speed * np.sin(heading)])
    limits = np.column_stack([p.width - sizes[:, 0], p.height - sizes[:, 1]])
    boxes = np.empty((p.frames, n, 4))
    bounces = {k + 1: [] for k in range(n)}
    for t in range(p.frames):
        boxes[t, :, :2] = pos
        boxes[t, :, 2:] = pos + sizes
        pos = pos + vel
        for k in range(n):
            for axis in range(2):
                if pos[k, axis] < 0.0 or pos[k, axis] > limits[k, axis]:
                    edge = 0.0 if pos[k, axis] < 0.0 else limits[k, axis]
                    pos[k, axis] = 2.0 * edge - pos[k, axis]
                    vel[k, axis] = -vel[k, axis]
                    if t + 2 <= p.frames:
                        bounces[k + 1].append(t + 2)
    return boxes, bounces


def _safe_box(corners):
    x1, y1, x2, y2 = (float(v) for v in corners)
    if x2 - x1 < 1.0:
        c = 0.5 * (x1 + x2)
        x1, x2 = c - 0.5, c + 0.5
    if y2 - y1 < 1.0:
        c = 0.5 * (y1 + y2)
        y1, y2 = c - 0.5, c + 0.5
    return BBox(x1, y1, x2, y2)


def generate(params: ScenarioParams) -> Scenario:
    """Ground truth plus a detection stream with embeddings.

    Occluded objects are absent from both the detections and the ground
    truth for the occluded frames.
    """
    motion_rng, emb_rng, det_rng = (np.random.default_rng(s)
                                    for s in np.random.SeedSequence(params.seed).spawn(3))
    boxes, bounces = _trajectories(params, motion_rng)
    dim = params.emb_dim
    prototypes = _unit_rows(emb_rng.standard_normal((params.n_objects, dim))) \
        if params.n_objects else np.zeros((0, dim))

    scenario = Scenario(params, {}, {}, prototypes, {k: sorted(set(v)) for k, v in bounces.items()})
    for t in range(params.frames):
        frame = t + 1
        gt_row, det_row = [], []
        for k in range(params.n_objects):
            obj = k + 1
            noise = emb_rng.standard_normal(dim)
            if scenario.occluded(obj, frame):
                continue
            vec = prototypes[k] + params.emb_noise * noise
            emb = vec / np.linalg.norm(vec)
            box = BBox(*boxes[t, k])
            gt_row.append(Detection(frame, box, 1.0, obj, emb))
            dropped = det_rng.random() < params.dropout
            shake = det_rng.standard_normal(4) * params.jitter
            if dropped:
                continue
            det_box = box if params.jitter == 0.0 else _safe_box(boxes[t, k] + shake)
            det_row.append(Detection(frame, det_box, 1.0, -1, emb))
        if det_rng.random() < params.fp_rate:
            w, h = det_rng.uniform(params.size_range[0], params.size_range[1], size=2)
            x = det_rng.uniform(0.0, params.width - w)
            y = det_rng.uniform(0.0, params.height - h)
            junk = det_rng.standard_normal(dim)
            det_row.append(Detection(frame, BBox(x, y, x + w, y + h),
                                     float(det_rng.uniform(0.5, 1.0)), -1,
                                     junk / np.linalg.norm(junk)))
        if gt_row:
            scenario.gt[frame] = gt_row
        scenario.detections[frame] = det_row
    return scenario


def gated_detector(gt_frame: list[Detection], proposals: list[BBox], gate_iou: float,
                   recall_floor: float, rng) -> list[Detection]:
    """Detector stub that only reliably finds objects it was pointed at.

    A box is emitted when some proposal overlaps it with IoU >= ``gate_iou``;
    otherwise only with probability ``recall_floor``. One uniform draw is
    consumed per box either way, so runs with and without proposals see the
    same random numbers.
    """
    if not 0.0 < gate_iou <= 1.0:
        raise ValueError("gate_iou must lie in (0, 1]")
    if not gt_frame:
        return []
    draws = rng.random(len(gt_frame))
    if proposals:
        best = kernels.iou_matrix(boxes_to_array([d.bbox for d in gt_frame]),
                                  boxes_to_array(proposals)).max(axis=1)
    else:
        best = np.zeros(len(gt_frame))
    return [replace(d, track_id=-1) for d, b, u in zip(gt_frame, best, draws)
            if b >= gate_iou or u < recall_floor]


def closed_loop(scenario: Scenario, tracker_params: TrackerParams | None = None,
                gate_iou: float = 0.3, recall_floor: float = 0.3,
                use_proposals: bool = True, seed: int = 0) -> list[FrameResult]:
    """Run tracker and gated detector together, feeding proposals back each frame."""
    rng = np.random.default_rng(seed)
    tracker = Tracker(tracker_params)
    results = []
    for frame in range(1, scenario.params.frames + 1):
        proposals = tracker.proposals_for_next_frame() if use_proposals else []
        dets = gated_detector(scenario.gt.get(frame, []), proposals, gate_iou,
                              recall_floor, rng)
        results.append(tracker.step(frame, dets))
    return results


# -- presets ----------------------------------------------------------------

def occlusion_heavy(seed: int, n_objects: int = 8, frames: int = 150) -> ScenarioParams:
    """Oracle scene where most objects vanish for 8-25 frames, often across a wall bounce."""
    rng = np.random.default_rng([seed, 1])
    events = []
    for obj in range(1, n_objects + 1):
        start = int(rng.integers(10, frames // 2))
        for _ in range(2):
            duration = int(rng.integers(8, 26))
            events.append((start, duration, obj))
            start += duration + int(rng.integers(10, 30))
            if start + 25 >= frames:
                break
    return ScenarioParams(seed=seed, n_objects=n_objects, frames=frames,
                          speed_range=(3.0, 7.0), occlusions=tuple(events))


def moving_scene(seed: int, n_objects: int = 8, frames: int = 100) -> ScenarioParams:
    """Occlusion-free oracle scene."""
    return ScenarioParams(seed=seed, n_objects=n_objects, frames=frames)


PRESETS = {"moving": moving_scene, "occlusion": occlusion_heavy}


def save(scenario: Scenario, out_dir) -> dict:
    """Write gt.txt, det.txt, emb.jsonl, labeled.jsonl and scenario.json; return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, fname) for name, fname in (
        ("gt", "gt.txt"), ("dets", "det.txt"), ("embs", "emb.jsonl"),
        ("labeled", "labeled.jsonl"), ("meta", "scenario.json"))}
    write_mot(paths["gt"], scenario.gt)
    write_mot(paths["dets"], scenario.detections)
    write_embeddings(paths["embs"], scenario.detections)
    write_labeled_embeddings(paths["labeled"], scenario.gt)
    meta = {"params": asdict(scenario.params),
            "bounces": {str(k): v for k, v in scenario.bounces.items()}}
    with open(paths["meta"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def write_labeled_embeddings(path, frames: dict) -> None:
    """Embedding sidecar for a ground-truth file, with an extra ``id`` key per record."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame in sorted(frames):
            for index, d in enumerate(frames[frame]):
                if d.embedding is None:
                    continue
                rec = {"frame": frame, "index": index, "id": d.track_id,
                       "embedding": [float(v) for v in d.embedding]}
                fh.write(json.dumps(rec) + "\n")
