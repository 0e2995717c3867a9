"""Hot numeric kernels with two interchangeable backends.

The numba backend is used when numba imports cleanly. Setting the
environment variable ``JDTRACK_DISABLE_NUMBA=1`` before import selects the
pure-numpy backend instead. Both modules expose the same functions and can
be imported directly (``jdtrack.kernels._numpy``/``_numba``) for
side-by-side comparisons.
"""
import os

_FLAG = os.environ.get("JDTRACK_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG in {"1", "true", "yes", "on"}

_impl = None
if not NUMBA_DISABLED:
    try:
        from . import _numba as _impl
    except ImportError:  # numba missing or broken install
        _impl = None
if _impl is None:
    from . import _numpy as _impl

BACKEND = "numba" if _impl.__name__.endswith("_numba") else "numpy"

iou_matrix = _impl.iou_matrix
cosine_distance_matrix = _impl.cosine_distance_matrix
cost_matrix = _impl.cost_matrix
pairwise_sqdist = _impl.pairwise_sqdist
clamp_boxes = _impl.clamp_boxes
kf_predict_batch = _impl.kf_predict_batch
kf_update_batch = _impl.kf_update_batch
blend_embeddings = _impl.blend_embeddings
linear_assignment = _impl.linear_assignment


def warm_up():
    """Call every kernel once on tiny inputs.

    The first compiled call in a process pays numba's start-up cost (a few
    hundred ms even with a warm cache); timed loops call this beforehand.
    """
    import numpy as np

    boxes = np.array([[0.0, 0.0, 2.0, 2.0], [1.0, 1.0, 3.0, 3.0]])
    emb = np.array([[1.0, 0.0], [0.0, 1.0]])
    mean = np.hstack([boxes, np.zeros((2, 4))])
    cov = np.tile(np.eye(8), (2, 1, 1))
    iou_matrix(boxes, boxes)
    cosine_distance_matrix(emb, emb)
    cost_matrix(boxes, emb, boxes, emb, 0.5, 0.5)
    pairwise_sqdist(emb)
    mean, cov = kf_predict_batch(mean, cov, 1.0, 0.5)
    kf_update_batch(mean, cov, boxes, 2.0)
    clamp_boxes(mean, 1.0)
    blend_embeddings(emb.copy(), np.array([0, 1]), emb, 0.9)
    linear_assignment(np.eye(2), 1e-10)

__all__ = [
    "BACKEND",
    "NUMBA_DISABLED",
    "iou_matrix",
    "cosine_distance_matrix",
    "cost_matrix",
    "pairwise_sqdist",
    "clamp_boxes",
    "kf_predict_batch",
    "kf_update_batch",
    "blend_embeddings",
    "linear_assignment",
    "warm_up",
]
