"""Per-stage tracking time versus the number of tracks."""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .sim import ScenarioParams, generate
from .tracker import STAGES, Tracker, TrackerParams

DEFAULT_TRACKS = (8, 16, 32, 64, 128)


def bench_scenario(n_tracks: int, dim: int, frames: int, seed: int = 0) -> ScenarioParams:
    # constant object density: image area grows with the track count
    side = float(math.ceil(120.0 * math.sqrt(n_tracks) + 200.0))
    return ScenarioParams(seed=seed, width=side, height=side, n_objects=n_tracks,
                          frames=frames, emb_dim=dim, speed_range=(1.0, 4.0))


def _warm_up(dim):
    kernels.warm_up()
    scenario = generate(ScenarioParams(seed=0, n_objects=4, frames=5, emb_dim=dim))
    tracker = Tracker()
    for frame in range(1, 6):
        tracker.step(frame, scenario.detections[frame])


def _sample(scenario, frames, warmup_frames, params, samples):
    tracker = Tracker(params)
    for frame in range(1, frames + 1):
        tracker.step(frame, scenario.detections[frame])
        if frame > warmup_frames:
            for s in STAGES:
                samples[s].append(tracker.last_stage_ns[s] / 1e6)


def _summarise(n_tracks, samples):
    total = np.sum([samples[s] for s in STAGES], axis=0)
    out = {"tracks": n_tracks}
    for name, values in list(samples.items()) + [("total", total)]:
        arr = np.asarray(values)
        out[name] = {"median_ms": float(np.median(arr)), "p95_ms": float(np.percentile(arr, 95))}
    med = out["total"]["median_ms"]
    out["fps"] = 1e3 / med if med > 0 else 0.0
    return out


def run(tracks=DEFAULT_TRACKS, dim: int = 128, frames: int = 30, repeats: int = 20,
        params: TrackerParams | None = None, warmup_frames: int = 3) -> dict:
    """Median and 95th percentile per stage over every timed step of every repeat.

    Repeats are interleaved across track counts so that slow drift in machine
    load affects every point alike.
    """
    if frames <= warmup_frames:
        raise ValueError(f"frames must exceed the {warmup_frames} warm-up frames")
    _warm_up(dim)
    scenarios = {n: generate(bench_scenario(n, dim, frames)) for n in tracks}
    samples = {n: {s: [] for s in STAGES} for n in tracks}
    for _ in range(repeats):
        for n in tracks:
            _sample(scenarios[n], frames, warmup_frames, params, samples[n])
    return {"backend": kernels.BACKEND, "dim": dim, "frames": frames, "repeats": repeats,
            "points": [_summarise(n, samples[n]) for n in tracks]}


def format_table(result: dict) -> str:
    cols = list(STAGES) + ["total"]
    head = "tracks" + "".join(f"{c + ' med':>14}{'p95':>9}" for c in cols) + f"{'fps':>9}"
    lines = [f"backend={result['backend']} dim={result['dim']} frames={result['frames']} "
             f"repeats={result['repeats']} (ms)", head, "-" * len(head)]
    for p in result["points"]:
        cells = "".join(f"{p[c]['median_ms']:14.4f}{p[c]['p95_ms']:9.4f}" for c in cols)
        lines.append(f"{p['tracks']:6d}{cells}{p['fps']:9.1f}")
    return "\n".join(lines)
