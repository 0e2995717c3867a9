"""CLEAR-MOT evaluation (MOTA, MOTP, FP, FN, IDs, MT, ML) plus IDF1, precision and recall.

Counts are accumulated per sequence in :class:`MotCounts`; several
sequences are combined by adding counts, never by averaging ratios.
"""
from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kernels
from .assoc import hungarian_solve
from .io import read_kitti, read_mot

MOSTLY_TRACKED = 0.8
MOSTLY_LOST = 0.2


class EvaluationError(ValueError):
    pass


@dataclass
class MotCounts:
    gt_count: int = 0
    hyp_count: int = 0
    matches: int = 0
    fp: int = 0
    fn: int = 0
    id_switches: int = 0
    iou_sum: float = 0.0
    gt_tracks: int = 0
    mostly_tracked: int = 0
    mostly_lost: int = 0
    idtp: int = 0

    def __add__(self, other: "MotCounts") -> "MotCounts":
        return MotCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))


@dataclass(frozen=True)
class MotReport:
    mota: float  # fraction, may be negative
    motp: float  # mean matched IoU x 100
    fp: int
    fn: int
    id_switches: int
    precision: float  # percent
    recall: float  # percent
    mt: float  # percent of GT trajectories
    ml: float  # percent of GT trajectories
    idf1: float  # percent
    gt_count: int

    def __post_init__(self):
        expected = 1.0 - (self.fp + self.fn + self.id_switches) / self.gt_count
        if abs(self.mota - expected) > 1e-9:
            raise EvaluationError(f"MOTA {self.mota} disagrees with its decomposition {expected}")
        for name in ("motp", "precision", "recall", "mt", "ml", "idf1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise EvaluationError(f"{name} = {value} outside [0, 100]")

    @classmethod
    def from_counts(cls, c: MotCounts) -> "MotReport":
        if c.gt_count == 0:
            raise EvaluationError("ground truth is empty")
        return cls(
            mota=1.0 - (c.fp + c.fn + c.id_switches) / c.gt_count,
            motp=100.0 * c.iou_sum / c.matches if c.matches else 0.0,
            fp=c.fp,
            fn=c.fn,
            id_switches=c.id_switches,
            precision=100.0 * c.matches / c.hyp_count if c.hyp_count else 0.0,
            recall=100.0 * c.matches / c.gt_count,
            mt=100.0 * c.mostly_tracked / c.gt_tracks if c.gt_tracks else 0.0,
            ml=100.0 * c.mostly_lost / c.gt_tracks if c.gt_tracks else 0.0,
            idf1=200.0 * c.idtp / (c.gt_count + c.hyp_count),
            gt_count=c.gt_count,
        )

    def to_dict(self) -> dict:
        """Column names as used in tracking result tables."""
        return {"MOTA": self.mota, "MOTP": self.motp, "FP": self.fp, "FN": self.fn,
                "IDs": self.id_switches, "MT": self.mt, "ML": self.ml, "IDF1": self.idf1,
                "P": self.precision, "R": self.recall, "GT": self.gt_count}


def _check_unique(frame, records, what):
    ids = [r.track_id for r in records]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise EvaluationError(f"frame {frame}: {what} ids collide: {dup}")


def _boxes(records):
    out = np.empty((len(records), 4))
    for k, r in enumerate(records):
        b = r.bbox
        out[k] = (b.x1, b.y1, b.x2, b.y2)
    return out


def accumulate(gt: dict, hyp: dict, iou_threshold: float = 0.5) -> MotCounts:
    """Frame-by-frame CLEAR-MOT bookkeeping for one sequence.

    Correspondences made earlier are kept while their IoU stays at or above
    the threshold; everything else is matched by minimum total IoU distance.
    An identity switch is a GT object whose matched hypothesis id differs
    from the last one it was matched to, even across gaps.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in (0, 1]")
    if not any(gt.values()):
        raise EvaluationError("ground truth is empty")
    c = MotCounts()
    last_hyp = {}
    gt_frames = defaultdict(int)
    gt_matched = defaultdict(int)
    pair_hits = defaultdict(int)

    for frame in sorted(set(gt) | set(hyp)):
        g = gt.get(frame, [])
        h = hyp.get(frame, [])
        _check_unique(frame, g, "ground-truth")
        _check_unique(frame, h, "hypothesis")
        c.gt_count += len(g)
        c.hyp_count += len(h)
        for r in g:
            gt_frames[r.track_id] += 1
        if not g or not h:
            c.fn += len(g)
            c.fp += len(h)
            continue

        overlap = kernels.iou_matrix(_boxes(g), _boxes(h))
        for gi, hk in np.argwhere(overlap >= iou_threshold):
            pair_hits[g[gi].track_id, h[hk].track_id] += 1

        pairs = []
        used_g, used_h = set(), set()
        hyp_index = {r.track_id: k for k, r in enumerate(h)}
        for gi, r in enumerate(g):
            hk = hyp_index.get(last_hyp.get(r.track_id))
            if hk is not None and hk not in used_h and overlap[gi, hk] >= iou_threshold:
                pairs.append((gi, hk))
                used_g.add(gi)
                used_h.add(hk)

        free_g = [i for i in range(len(g)) if i not in used_g]
        free_h = [k for k in range(len(h)) if k not in used_h]
        if free_g and free_h:
            sub = overlap[np.ix_(free_g, free_h)]
            allowed = sub >= iou_threshold
            cost = np.where(allowed, 1.0 - sub, float(min(sub.shape) + 1))
            for a, b in hungarian_solve(cost):
                if allowed[a, b]:
                    pairs.append((free_g[a], free_h[b]))

        for gi, hk in pairs:
            gid, hid = g[gi].track_id, h[hk].track_id
            prev = last_hyp.get(gid)
            if prev is not None and prev != hid:
                c.id_switches += 1
            last_hyp[gid] = hid
            gt_matched[gid] += 1
            c.iou_sum += float(overlap[gi, hk])
        c.matches += len(pairs)
        c.fn += len(g) - len(pairs)
        c.fp += len(h) - len(pairs)

    c.gt_tracks = len(gt_frames)
    for gid, n in gt_frames.items():
        ratio = gt_matched[gid] / n
        c.mostly_tracked += ratio >= MOSTLY_TRACKED
        c.mostly_lost += ratio <= MOSTLY_LOST

    if pair_hits:
        gids = sorted({k[0] for k in pair_hits})
        hids = sorted({k[1] for k in pair_hits})
        gpos = {g: i for i, g in enumerate(gids)}
        hpos = {h: i for i, h in enumerate(hids)}
        hits = np.zeros((len(gids), len(hids)))
        for (gid, hid), n in pair_hits.items():
            hits[gpos[gid], hpos[hid]] = n
        c.idtp = int(sum(hits[i, j] for i, j in hungarian_solve(-hits)))
    return c


def _load(source, fmt, kitti_type):
    if isinstance(source, (str, os.PathLike)):
        if fmt == "mot":
            return read_mot(source)
        if fmt == "kitti":
            return read_kitti(source, kitti_type)
        raise ValueError(f"unknown format {fmt!r}")
    return source


def evaluate(gt, hyp, iou_threshold: float = 0.5, fmt: str = "mot",
             kitti_type: str | None = "Car") -> MotReport:
    """Evaluate a hypothesis against ground truth (paths or frame mappings)."""
    counts = accumulate(_load(gt, fmt, kitti_type), _load(hyp, fmt, kitti_type), iou_threshold)
    return MotReport.from_counts(counts)


COLUMNS = ("MOTA", "MOTP", "P", "R", "FP", "FN", "IDs", "MT", "ML", "IDF1")


def format_table(rows: dict) -> str:
    """Aligned text table; ``rows`` maps a row label to a MotReport."""
    label_w = max([len("Sequence")] + [len(k) for k in rows])
    head = "Sequence".ljust(label_w) + "".join(c.rjust(9) for c in COLUMNS)
    lines = [head, "-" * len(head)]
    for name, rep in rows.items():
        d = rep.to_dict()
        cells = []
        for col in COLUMNS:
            v = d[col]
            if col == "MOTA":
                cells.append(f"{100.0 * v:9.1f}")
            elif isinstance(v, float):
                cells.append(f"{v:9.1f}")
            else:
                cells.append(f"{v:9d}")
        lines.append(name.ljust(label_w) + "".join(cells))
    return "\n".join(lines)


def counts_to_dict(c: MotCounts) -> dict:
    return asdict(c)
