"""Readers and writers for MOT-Challenge, KITTI tracking and embedding files.

Frames are 1-based everywhere inside the package; KITTI's 0-based frame
numbers are shifted on read and write. Every parse error is a
:class:`FormatError` carrying ``path:line``.
"""
from __future__ import annotations

import json
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .geometry import BBox

Frames = dict  # frame -> list[Detection]

UNIT_NORM_TOL = 1e-6


class FormatError(ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{self.path}:{line}: {message}")

    def __reduce__(self):  # keep picklable across worker processes
        return type(self), (self.path, self.line, self.message)


@dataclass(frozen=True)
class Detection:
    """One box on one frame.

    ``track_id`` is -1 for raw detections and the identity for ground truth
    or tracker output. ``embedding`` is optional until tracking with a
    non-zero appearance weight.
    """

    frame: int
    bbox: BBox
    score: float = 1.0
    track_id: int = -1
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if int(self.frame) != self.frame or self.frame < 1:
            raise ValueError(f"frame must be an integer >= 1, got {self.frame!r}")
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite score {self.score!r}")


def group_by_frame(records: Iterable[Detection]) -> Frames:
    out = defaultdict(list)
    for r in records:
        out[r.frame].append(r)
    return dict(sorted(out.items()))


def _flatten(records) -> list[Detection]:
    if isinstance(records, Mapping):
        return [r for frame in sorted(records) for r in records[frame]]
    return list(records)


def _fmt(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _exact_extent(lo: float, hi: float) -> float:
    """A width w with ``lo + w == hi`` in float arithmetic."""
    w = hi - lo
    for _ in range(8):
        s = lo + w
        if s == hi:
            return w
        w = math.nextafter(w, math.inf if s < hi else -math.inf)
    return hi - lo


def _parse_int(token, path, lineno, what):
    try:
        return int(token)
    except ValueError:
        raise FormatError(path, lineno, f"{what} is not an integer: {token!r}") from None


def _parse_float(token, path, lineno, what):
    try:
        value = float(token)
    except ValueError:
        raise FormatError(path, lineno, f"{what} is not a number: {token!r}") from None
    if not math.isfinite(value):
        raise FormatError(path, lineno, f"{what} is not finite: {token!r}")
    return value


# -- MOT Challenge ----------------------------------------------------------

MOT_FIELDS = ("frame", "id", "bb_left", "bb_top", "bb_width", "bb_height", "conf")


def parse_mot_line(line: str, path="<string>", lineno=1) -> Detection:
    parts = [p.strip() for p in line.split(",")]
    if not 7 <= len(parts) <= 10:
        raise FormatError(path, lineno, f"expected 7 to 10 comma-separated fields, got {len(parts)}")
    frame = _parse_int(parts[0], path, lineno, "frame")
    if frame < 1:
        raise FormatError(path, lineno, f"frame must be >= 1, got {frame}")
    track_id = _parse_int(parts[1], path, lineno, "id")
    if track_id < 1 and track_id != -1:
        raise FormatError(path, lineno, f"id must be positive or -1, got {track_id}")
    left, top, width, height = (_parse_float(parts[k], path, lineno, MOT_FIELDS[k])
                                for k in range(2, 6))
    if width <= 0 or height <= 0:
        raise FormatError(path, lineno, f"non-positive width/height ({width}, {height})")
    score = _parse_float(parts[6], path, lineno, "conf")
    for k in range(7, len(parts)):
        _parse_float(parts[k], path, lineno, f"field {k + 1}")
    try:
        box = BBox(left, top, left + width, top + height)
    except ValueError as exc:
        raise FormatError(path, lineno, str(exc)) from None
    return Detection(frame, box, score, track_id)


def read_mot(path) -> Frames:
    """Parse a MOT-Challenge text file into ``{frame: [Detection, ...]}``.

    Frames are sorted; detections keep file order within a frame, which is
    the ordinal used by the embedding sidecar.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            records.append(parse_mot_line(line, path, lineno))
    return group_by_frame(records)


def format_mot_line(d: Detection) -> str:
    b = d.bbox
    w = _exact_extent(b.x1, b.x2)
    h = _exact_extent(b.y1, b.y2)
    return ",".join([str(d.frame), str(d.track_id), _fmt(b.x1), _fmt(b.y1),
                     _fmt(w), _fmt(h), _fmt(d.score), "-1", "-1", "-1"])


def write_mot(path, records) -> None:
    """Write records sorted by frame, then id. Accepts a frame mapping or an iterable."""
    rows = sorted(_flatten(records), key=lambda d: (d.frame, d.track_id))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in rows:
            fh.write(format_mot_line(d) + "\n")


# -- KITTI tracking ---------------------------------------------------------

@dataclass(frozen=True)
class KittiRow:
    frame: int  # 1-based
    track_id: int
    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: BBox
    dimensions: tuple = (-1.0, -1.0, -1.0)  # height, width, length
    location: tuple = (-1000.0, -1000.0, -1000.0)
    rotation_y: float = -10.0
    score: float | None = None

    def to_detection(self) -> Detection:
        return Detection(self.frame, self.bbox, 1.0 if self.score is None else self.score,
                         self.track_id)

    @classmethod
    def from_detection(cls, d: Detection, type: str = "Car") -> "KittiRow":
        return cls(d.frame, d.track_id, type, 0.0, 0, -10.0, d.bbox, score=d.score)


def parse_kitti_line(line: str, path="<string>", lineno=1) -> KittiRow:
    parts = line.split()
    if len(parts) not in (17, 18):
        raise FormatError(path, lineno, f"expected 17 or 18 fields, got {len(parts)}")
    frame = _parse_int(parts[0], path, lineno, "frame")
    if frame < 0:
        raise FormatError(path, lineno, f"frame must be >= 0, got {frame}")
    track_id = _parse_int(parts[1], path, lineno, "track id")
    kind = parts[2]
    truncated = _parse_float(parts[3], path, lineno, "truncated")
    occluded = _parse_int(parts[4], path, lineno, "occluded")
    alpha = _parse_float(parts[5], path, lineno, "alpha")
    x1, y1, x2, y2 = (_parse_float(parts[k], path, lineno, "bbox") for k in range(6, 10))
    try:
        box = BBox(x1, y1, x2, y2)
    except ValueError as exc:
        raise FormatError(path, lineno, str(exc)) from None
    dims = tuple(_parse_float(parts[k], path, lineno, "dimensions") for k in range(10, 13))
    loc = tuple(_parse_float(parts[k], path, lineno, "location") for k in range(13, 16))
    rot = _parse_float(parts[16], path, lineno, "rotation_y")
    score = _parse_float(parts[17], path, lineno, "score") if len(parts) == 18 else None
    return KittiRow(frame + 1, track_id, kind, truncated, occluded, alpha, box, dims, loc,
                    rot, score)


def parse_kitti(path) -> list[KittiRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rows.append(parse_kitti_line(line, path, lineno))
    return rows


def read_kitti(path, type_filter: str | None = "Car") -> Frames:
    """Parse a KITTI tracking file, keeping rows of ``type_filter`` (all if None).

    DontCare rows are always dropped.
    """
    keep = []
    for row in parse_kitti(path):
        if row.type == "DontCare":
            continue
        if type_filter is not None and row.type != type_filter:
            continue
        keep.append(row.to_detection())
    return group_by_frame(keep)


def format_kitti_line(row: KittiRow) -> str:
    b = row.bbox
    fields = [str(row.frame - 1), str(row.track_id), row.type, _fmt(row.truncated),
              str(row.occluded), _fmt(row.alpha), _fmt(b.x1), _fmt(b.y1), _fmt(b.x2),
              _fmt(b.y2), *map(_fmt, row.dimensions), *map(_fmt, row.location),
              _fmt(row.rotation_y)]
    if row.score is not None:
        fields.append(_fmt(row.score))
    return " ".join(fields)


def write_kitti(path, rows, type: str = "Car") -> None:
    """Write KittiRow objects, or Detections converted with placeholder 3D fields."""
    out = [r if isinstance(r, KittiRow) else KittiRow.from_detection(r, type)
           for r in _flatten(rows)]
    out.sort(key=lambda r: (r.frame, r.track_id))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in out:
            fh.write(format_kitti_line(r) + "\n")


# -- embedding sidecar ------------------------------------------------------

def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def read_embeddings(path) -> dict[tuple[int, int], np.ndarray]:
    """Parse JSON Lines ``{"frame", "index", "embedding"}`` records.

    Vectors are L2-normalised on ingest and must share one dimension.
    """
    return {key: vec for key, (_, vec) in _read_embedding_records(path, False).items()}


def read_labeled_embeddings(path) -> Frames:
    """Embedding records that also carry an ``id`` key, as identity-labelled instances.

    Returns ``{frame: [LabeledInstance, ...]}`` ordered by record index.
    """
    out = defaultdict(list)
    for (frame, index), (ident, vec) in sorted(_read_embedding_records(path, True).items()):
        out[frame].append(LabeledInstance(frame, ident, vec))
    return dict(out)


@dataclass(frozen=True)
class LabeledInstance:
    frame: int
    track_id: int
    embedding: np.ndarray = field(compare=False, repr=False)


def _read_embedding_records(path, with_id):
    out = {}
    dim = None
    required = {"frame", "index", "embedding"} | ({"id"} if with_id else set())
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise FormatError(path, lineno, "record is not a JSON object")
            missing = required - rec.keys()
            if missing:
                raise FormatError(path, lineno, f"missing keys {sorted(missing)}")
            frame, index, values = rec["frame"], rec["index"], rec["embedding"]
            if not _is_int(frame) or frame < 1:
                raise FormatError(path, lineno, f"frame must be an integer >= 1, got {frame!r}")
            if not _is_int(index) or index < 0:
                raise FormatError(path, lineno, f"index must be an integer >= 0, got {index!r}")
            if (not isinstance(values, list) or not values
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                               for v in values)):
                raise FormatError(path, lineno, "embedding must be a non-empty list of numbers")
            vec = np.asarray(values, dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise FormatError(path, lineno, "embedding has non-finite components")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise FormatError(path, lineno, f"embedding dimension {vec.size} != {dim}")
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise FormatError(path, lineno, "zero-norm embedding")
            ident = rec.get("id")
            if with_id and not _is_int(ident):
                raise FormatError(path, lineno, f"id must be an integer, got {ident!r}")
            key = (frame, index)
            if key in out:
                raise FormatError(path, lineno, f"duplicate record for frame {frame} index {index}")
            out[key] = (ident, vec / norm)
    return out


def write_embeddings(path, frames: Frames) -> None:
    """Write the embedding of every detection, keyed by (frame, ordinal)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame in sorted(frames):
            for index, d in enumerate(frames[frame]):
                if d.embedding is None:
                    continue
                rec = {"frame": frame, "index": index,
                       "embedding": [float(v) for v in d.embedding]}
                fh.write(json.dumps(rec) + "\n")


def attach_embeddings(frames: Frames, embeddings: Mapping, required: bool) -> Frames:
    """Return a copy of ``frames`` with embeddings filled in by (frame, ordinal).

    With ``required`` every detection must receive one; otherwise gaps are
    left as ``None``. Records pointing at no detection are an error.
    """
    out = {}
    used = 0
    for frame in sorted(frames):
        row = []
        for index, d in enumerate(frames[frame]):
            vec = embeddings.get((frame, index))
            if vec is None and required:
                raise ValueError(f"detection frame {frame} index {index} has no embedding")
            if vec is not None:
                used += 1
            row.append(replace(d, embedding=vec))
        out[frame] = row
    if used != len(embeddings):
        orphans = sorted(k for k in embeddings
                         if k[0] not in frames or k[1] >= len(frames[k[0]]))
        raise ValueError(f"embeddings without a matching detection: {orphans[:5]}")
    return out


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
