"""Flat TOML configuration with documented defaults and CLI overrides."""
from __future__ import annotations

import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .assoc import CostParams
from .embed import MiningParams
from .kalman import KalmanParams
from .tracker import TrackerParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    default: object
    type: type
    help: str


# Every key, its default and meaning. Order is the order shown in --help.
KEYS = {
    # association
    "alpha": Key(0.5, float, "weight of the IoU distance in the association cost"),
    "beta": Key(0.5, float, "weight of the cosine distance in the association cost"),
    "max_cost": Key(0.7, float, "matches costing more than this are discarded"),
    # kalman filter
    "process_noise_pos": Key(1.0, float, "process noise std of corner positions (px)"),
    "process_noise_vel": Key(0.5, float, "process noise std of corner velocities (px/frame)"),
    "measurement_noise": Key(2.0, float, "measurement noise std of observed corners (px)"),
    "initial_vel_uncertainty": Key(10.0, float, "initial velocity std of a new track (px/frame)"),
    # lifecycle
    "max_age": Key(30, int, "frames a lost track survives without a match"),
    "min_hits": Key(1, int, "matched frames before a track is reported"),
    "emb_momentum": Key(0.9, float, "weight of the old track embedding in the running average"),
    "score_floor": Key(0.0, float, "unmatched detections below this score spawn no track"),
    "image_width": Key(0.0, float, "clamp proposals to this width (0 = no clamping)"),
    "image_height": Key(0.0, float, "clamp proposals to this height (0 = no clamping)"),
    # triplet mining
    "batch_frames": Key(8, int, "frames per mining batch (B)"),
    "window": Key(16, int, "consecutive-frame window the batch is drawn from (D)"),
    "min_identities": Key(8, int, "identities a valid batch must contain (P)"),
    "min_instances": Key(4, int, "instances each of those identities needs (K)"),
    "margin": Key(0.2, float, "triplet loss margin"),
    "retry_budget": Key(100, int, "windows tried before giving up on a valid batch"),
    "mining_seed": Key(0, int, "seed for batch sampling"),
    "batches": Key(1, int, "number of batches mined by the mine command"),
    # formats
    "format": Key("mot", str, "file format of detections/tracks: mot or kitti"),
    "kitti_type": Key("Car", str, "object type kept when reading KITTI files"),
    "iou_threshold": Key(0.5, float, "IoU needed for a GT/hypothesis match in evaluation"),
    # io paths
    "dets": Key("", str, "detection file for track"),
    "embs": Key("", str, "embedding sidecar for the detection file"),
    "out": Key("", str, "hypothesis file written by track"),
    "timing": Key("", str, "timing JSON written by track (default: <out>.timing.json)"),
}


def defaults() -> dict:
    return {name: k.default for name, k in KEYS.items()}


def _coerce(name, value):
    key = KEYS[name]
    if key.type is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if key.type is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if key.type is str and isinstance(value, str):
        return value
    raise ConfigError(f"config key {name!r} expects {key.type.__name__}, got {value!r}")


def load(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the TOML file, then overrides. Unknown keys raise ConfigError."""
    cfg = defaults()
    sources = []
    if path:
        try:
            with open(path, "rb") as fh:
                sources.append(tomllib.load(fh))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    if overrides:
        sources.append(overrides)
    for src in sources:
        for name, value in src.items():
            if name not in KEYS:
                raise ConfigError(f"unknown config key {name!r}")
            cfg[name] = _coerce(name, value)
    if cfg["format"] not in ("mot", "kitti"):
        raise ConfigError(f"format must be 'mot' or 'kitti', got {cfg['format']!r}")
    return cfg


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value typed by the key's declared type."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    name, raw = (s.strip() for s in text.split("=", 1))
    if name not in KEYS:
        raise ConfigError(f"unknown config key {name!r}")
    kind = KEYS[name].type
    try:
        return name, kind(raw) if kind is not str else raw
    except ValueError:
        raise ConfigError(f"config key {name!r} expects {kind.__name__}, got {raw!r}") from None


def tracker_params(cfg: dict) -> TrackerParams:
    try:
        size = None
        if cfg["image_width"] > 0 and cfg["image_height"] > 0:
            size = (cfg["image_width"], cfg["image_height"])
        return TrackerParams(
            cost=CostParams(cfg["alpha"], cfg["beta"], cfg["max_cost"]),
            kalman=KalmanParams(cfg["process_noise_pos"], cfg["process_noise_vel"],
                                cfg["measurement_noise"], cfg["initial_vel_uncertainty"]),
            max_age=cfg["max_age"], min_hits=cfg["min_hits"],
            emb_momentum=cfg["emb_momentum"], score_floor=cfg["score_floor"],
            image_size=size)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def mining_params(cfg: dict) -> MiningParams:
    try:
        return MiningParams(cfg["batch_frames"], cfg["window"], cfg["min_identities"],
                            cfg["min_instances"], cfg["margin"], cfg["retry_budget"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def describe() -> str:
    width = max(len(n) for n in KEYS)
    lines = ["config keys (TOML, flat; override with --set key=value):"]
    for name, k in KEYS.items():
        lines.append(f"  {name.ljust(width)}  default {k.default!r:<8}  {k.help}")
    return "\n".join(lines)
