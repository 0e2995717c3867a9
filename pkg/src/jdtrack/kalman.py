"""Constant-velocity Kalman filter over two opposing box corners.

State is ``[x1, y1, x2, y2, vx1, vy1, vx2, vy2]`` with dt = 1 frame. The
single-track functions here wrap the batched kernels that the tracker uses
on all tracks at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import BBox

MIN_BOX_SIZE = 1.0


@dataclass(frozen=True)
class KalmanParams:
    process_noise_pos: float = 1.0
    process_noise_vel: float = 0.5
    measurement_noise: float = 2.0
    initial_vel_uncertainty: float = 10.0

    def __post_init__(self):
        for name in ("process_noise_pos", "process_noise_vel",
                     "measurement_noise", "initial_vel_uncertainty"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray  # (8,)
    covariance: np.ndarray  # (8, 8)

    @property
    def box(self) -> BBox:
        return BBox(*self.mean[:4])

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[4:].copy()


def init_batch(boxes: np.ndarray, params: KalmanParams):
    """Initial means and covariances for an (n, 4) array of corner boxes."""
    n = boxes.shape[0]
    mean = np.zeros((n, 8))
    mean[:, :4] = boxes
    diag = np.array([params.measurement_noise ** 2] * 4
                    + [params.initial_vel_uncertainty ** 2] * 4)
    cov = np.broadcast_to(np.diag(diag), (n, 8, 8)).copy()
    return mean, cov


def predict_batch(mean, cov, params: KalmanParams):
    mean, cov = kernels.kf_predict_batch(mean, cov, params.process_noise_pos,
                                         params.process_noise_vel)
    kernels.clamp_boxes(mean, MIN_BOX_SIZE)
    return mean, cov


def update_batch(mean, cov, boxes, params: KalmanParams):
    mean, cov = kernels.kf_update_batch(mean, cov,
                                        np.ascontiguousarray(boxes, dtype=np.float64),
                                        params.measurement_noise)
    kernels.clamp_boxes(mean, MIN_BOX_SIZE)
    return mean, cov


def predicted_boxes(mean) -> np.ndarray:
    """Corner boxes one frame ahead, without touching the covariance."""
    ahead = np.ascontiguousarray(mean[:, :4] + mean[:, 4:])
    out = np.zeros((mean.shape[0], 8))
    out[:, :4] = ahead
    kernels.clamp_boxes(out, MIN_BOX_SIZE)
    return out[:, :4].copy()


def kf_init(box: BBox, params: KalmanParams | None = None) -> KalmanState:
    params = params or KalmanParams()
    mean, cov = init_batch(box.as_array()[None, :], params)
    return KalmanState(mean[0], cov[0])


def kf_predict(state: KalmanState, params: KalmanParams | None = None) -> KalmanState:
    """Advance one frame; the returned state's box is the next-frame proposal."""
    params = params or KalmanParams()
    mean, cov = predict_batch(state.mean[None, :].copy(), state.covariance[None, :, :].copy(),
                              params)
    return KalmanState(mean[0], cov[0])


def kf_update(state: KalmanState, observed: BBox,
              params: KalmanParams | None = None) -> KalmanState:
    params = params or KalmanParams()
    mean, cov = update_batch(state.mean[None, :].copy(), state.covariance[None, :, :].copy(),
                             observed.as_array()[None, :], params)
    return KalmanState(mean[0], cov[0])
