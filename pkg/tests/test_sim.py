import json

import numpy as np
import pytest

from jdtrack import metrics, sim
from jdtrack.embed import MiningParams, sample_batch
from jdtrack.geometry import BBox
from jdtrack.io import read_embeddings, read_labeled_embeddings, read_mot
from jdtrack.tracker import TrackerParams, run_sequence


def hyp_frames(results):
    return {r.frame: r.as_detections() for r in results}


def test_params_validation():
    for kw in (dict(dropout=1.5), dict(fp_rate=-0.1), dict(jitter=-1),
               dict(occlusions=((5, 0, 1),)), dict(occlusions=((5, 3, 9),)),
               dict(size_range=(10, 900)), dict(frames=0)):
        with pytest.raises(ValueError):
            sim.ScenarioParams(seed=0, **kw)
    with pytest.raises(TypeError):
        sim.ScenarioParams()  # the seed is mandatory
    with pytest.raises(ValueError):
        sim.ScenarioParams(seed=1.5)


def test_oracle_counts_and_exact_boxes():
    s = sim.generate(sim.ScenarioParams(seed=0, n_objects=6, frames=40))
    assert s.params.is_oracle
    for f in range(1, 41):
        assert len(s.detections[f]) == 6
        assert [d.bbox for d in s.detections[f]] == [g.bbox for g in s.gt[f]]
        assert all(d.track_id == -1 for d in s.detections[f])


def test_zero_embedding_noise_gives_identical_instances():
    s = sim.generate(sim.ScenarioParams(seed=1, n_objects=3, frames=10, emb_noise=0.0))
    first = {g.track_id: g.embedding for g in s.gt[1]}
    for f in s.gt:
        for g in s.gt[f]:
            assert np.array_equal(g.embedding, first[g.track_id])
            assert np.allclose(g.embedding, s.prototypes[g.track_id - 1], rtol=0, atol=1e-15)


def test_embeddings_unit_norm():
    s = sim.generate(sim.ScenarioParams(seed=2, n_objects=3, frames=10, fp_rate=1.0))
    for f in s.detections:
        for d in s.detections[f]:
            assert abs(np.linalg.norm(d.embedding) - 1.0) <= 1e-12


def test_fixed_seed_bitwise_identical():
    p = sim.ScenarioParams(seed=5, n_objects=4, frames=30, jitter=2.0, dropout=0.2,
                           fp_rate=0.5)
    a, b = sim.generate(p), sim.generate(p)
    for f in a.detections:
        assert a.detections[f] == b.detections[f]
        for x, y in zip(a.detections[f], b.detections[f]):
            assert np.array_equal(x.embedding, y.embedding)
    assert a.gt == b.gt and np.array_equal(a.prototypes, b.prototypes)


def test_detector_noise_leaves_trajectories_unchanged():
    clean = sim.generate(sim.ScenarioParams(seed=9, n_objects=4, frames=20))
    noisy = sim.generate(sim.ScenarioParams(seed=9, n_objects=4, frames=20, jitter=3.0,
                                            dropout=0.3))
    assert clean.gt == noisy.gt


def test_occluded_objects_absent():
    p = sim.ScenarioParams(seed=3, n_objects=3, frames=30, occlusions=((10, 5, 2),))
    s = sim.generate(p)
    for f in range(10, 15):
        assert 2 not in [g.track_id for g in s.gt[f]]
        assert len(s.detections[f]) == 2
    assert 2 in [g.track_id for g in s.gt[15]]


def test_reflective_boundaries():
    p = sim.ScenarioParams(seed=4, n_objects=5, frames=300, speed_range=(5.0, 9.0))
    s = sim.generate(p)
    assert any(s.bounces.values())
    for f in s.gt:
        for g in s.gt[f]:
            b = g.bbox
            assert 0 <= b.x1 and b.x2 <= p.width and 0 <= b.y1 and b.y2 <= p.height
    # away from bounces the motion is exactly constant velocity
    for obj, frames in s.bounces.items():
        track = {f: next(g.bbox.as_array() for g in s.gt[f] if g.track_id == obj)
                 for f in range(1, 301)}
        for f in range(3, 301):
            if not any(b in (f - 1, f) for b in frames):
                step_a = track[f] - track[f - 1]
                step_b = track[f - 1] - track[f - 2]
                assert np.allclose(step_a, step_b, atol=1e-9)


def test_gated_detector_examples():
    gt = sim.generate(sim.ScenarioParams(seed=0, n_objects=5, frames=1)).gt[1]
    rng = np.random.default_rng(0)
    assert len(sim.gated_detector(gt, [g.bbox for g in gt], 0.5, 0.0, rng)) == 5
    assert sim.gated_detector(gt, [], 0.5, 0.0, rng) == []
    assert len(sim.gated_detector(gt, [], 0.5, 1.0, rng)) == 5
    out = sim.gated_detector(gt, [gt[2].bbox], 0.5, 0.0, rng)
    assert [d.bbox for d in out] == [gt[2].bbox] and out[0].track_id == -1
    with pytest.raises(ValueError):
        sim.gated_detector(gt, [], 0.0, 0.5, rng)


def test_proposals_reduce_misses_on_moving_scenes():
    for seed in range(3):
        s = sim.generate(sim.moving_scene(seed))
        with_p = metrics.evaluate(s.gt, hyp_frames(sim.closed_loop(s, seed=seed)))
        without = metrics.evaluate(
            s.gt, hyp_frames(sim.closed_loop(s, use_proposals=False, seed=seed)))
        assert with_p.fn < without.fn


@pytest.mark.parametrize("seed", range(5))
def test_oracle_scene_tracks_perfectly(seed):
    s = sim.generate(sim.moving_scene(seed))
    results, _ = run_sequence(s.detections, TrackerParams(), last_frame=s.params.frames)
    rep = metrics.evaluate(s.gt, hyp_frames(results))
    assert rep.mota == 1.0 and rep.id_switches == 0


def test_streams_support_mining():
    s = sim.generate(sim.ScenarioParams(seed=6, n_objects=8, frames=16))
    p = MiningParams()
    assert sample_batch(s.gt, p, seed=0).is_valid(p)


def test_save_emits_io_formats(tmp_path):
    s = sim.generate(sim.ScenarioParams(seed=7, n_objects=3, frames=12, jitter=1.5))
    paths = sim.save(s, tmp_path / "out")
    gt = read_mot(paths["gt"])
    assert gt == s.gt
    dets = read_mot(paths["dets"])
    assert sum(map(len, dets.values())) == sum(map(len, s.detections.values()))
    embs = read_embeddings(paths["embs"])
    assert np.allclose(embs[(3, 1)], s.detections[3][1].embedding, atol=1e-15)
    labeled = read_labeled_embeddings(paths["labeled"])
    assert [x.track_id for x in labeled[1]] == [1, 2, 3]
    meta = json.loads(open(paths["meta"]).read())
    assert meta["params"]["seed"] == 7


def test_presets():
    heavy = sim.occlusion_heavy(3)
    assert heavy.is_oracle and heavy.occlusions
    assert all(8 <= dur <= 25 for _, dur, _ in heavy.occlusions)
    assert sim.moving_scene(3).occlusions == ()
    assert sim.occlusion_heavy(3) == heavy
