import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jdtrack.embed import LabeledBatch, MiningParams, NoValidBatchError, check_embedding, \
    cosine_distance, margin_satisfied, margin_violation_fraction, mine_hard_triplets, \
    normalize, sample_batch, squared_distance, triplet_loss
from jdtrack.io import Detection
from jdtrack.geometry import BBox

# squared norms are exactly 0.5 and 0.3 in float64
A, P_, N_ = np.zeros(2), np.array([0.5, 0.5]), np.array([0.5, 0.2236067977499789])


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def brute_force_mining(emb, ids):
    """Plain double loop over the batch with strict comparisons, so the first
    (lowest index) extremum wins."""
    n = len(ids)
    out = []
    for a in range(n):
        pos, best_p = -1, -1.0
        neg, best_n = -1, np.inf
        for j in range(n):
            d = float(np.sum((emb[a] - emb[j]) ** 2))
            if j != a and ids[j] == ids[a] and d > best_p:
                pos, best_p = j, d
            if ids[j] != ids[a] and d < best_n:
                neg, best_n = j, d
        if pos >= 0 and neg >= 0:
            out.append((a, pos, neg))
    return out


def test_default_mining_params():
    p = MiningParams()
    assert (p.batch_frames, p.window, p.min_identities, p.min_instances) == (8, 16, 8, 4)
    assert p.margin == 0.2 and p.retry_budget == 100


@pytest.mark.parametrize("kw", [dict(batch_frames=17), dict(min_identities=1),
                                dict(min_instances=1), dict(margin=0.0)])
def test_mining_params_validation(kw):
    with pytest.raises(ValueError):
        MiningParams(**kw)


def test_cosine_distance_examples():
    e = normalize([1, 2, 3])
    assert cosine_distance(e, e) == pytest.approx(0.0, abs=1e-15)
    assert cosine_distance([1, 0], [0, 1]) == 1.0
    assert cosine_distance([1, 0], [-1, 0]) == 2.0


def test_check_embedding():
    assert check_embedding([0.6, 0.8]).tolist() == [0.6, 0.8]
    for bad in ([1.0, 1.0], [np.nan, 1.0], []):
        with pytest.raises(ValueError):
            check_embedding(bad)
    with pytest.raises(ValueError):
        check_embedding([1.0, 0.0], dim=3)
    with pytest.raises(ValueError):
        normalize([0.0, 0.0])


@given(st.integers(2, 64), st.integers(0, 10_000))
def test_squared_distance_is_twice_cosine(d, seed):
    a, b = unit_rows(np.random.default_rng(seed), 2, d)
    assert abs(squared_distance(a, b) - 2 * cosine_distance(a, b)) <= 1e-9


def test_triplet_loss_examples():
    same = np.tile(normalize([1, 2, 2]), (3, 1))
    assert triplet_loss([(0, 1, 2)], same, 0.2) == 0.2
    far = np.array([[1.0, 0], [1.0, 0], [-1.0, 0]])
    assert triplet_loss([(0, 1, 2)], far, 0.2) == 0.0
    assert triplet_loss([(0, 1, 2)], np.array([A, P_, N_]), 0.2) == 0.4
    with pytest.raises(ValueError):
        triplet_loss([], same, 0.2)


def test_margin_satisfied_examples():
    a = np.array([1.0, 0, 0])
    n = np.array([0, 1.0, 0])
    assert margin_satisfied(a, a, n, 0.2)
    assert not margin_satisfied(a, n, n, 0.01)
    assert not margin_satisfied(a, a, a, 0.2)


def test_loss_zero_iff_non_strict_margin_both_directions():
    # boundary case: |a-p|^2 + margin == |a-n|^2 exactly (0.25 + 0.25 == 0.5)
    a, p, n = np.zeros(2), np.array([0.5, 0.0]), np.array([0.5, 0.5])
    emb = np.array([a, p, n])
    assert triplet_loss([(0, 1, 2)], emb, 0.25) == 0.0
    assert margin_satisfied(a, p, n, 0.25, strict=False)
    assert not margin_satisfied(a, p, n, 0.25, strict=True)
    # and a batch with one violator has positive loss
    emb2 = np.array([a, p, n, np.array([0.1, 0.0])])
    triplets = [(0, 1, 2), (0, 1, 3)]
    assert triplet_loss(triplets, emb2, 0.25) > 0
    assert not all(margin_satisfied(emb2[x], emb2[y], emb2[z], 0.25, strict=False)
                   for x, y, z in triplets)
    assert margin_violation_fraction(triplets, emb2, 0.25) == 0.5


@given(st.integers(0, 100_000), st.floats(0.01, 1.0))
def test_loss_zero_iff_all_satisfied(seed, margin):
    rng = np.random.default_rng(seed)
    emb = unit_rows(rng, 9, 3)
    triplets = [tuple(int(v) for v in rng.choice(9, 3, replace=False)) for _ in range(4)]
    ok = all(margin_satisfied(emb[a], emb[p], emb[n], margin, strict=False)
             for a, p, n in triplets)
    assert (triplet_loss(triplets, emb, margin) == 0.0) == ok
    assert triplet_loss(triplets, emb, margin) >= 0.0


def test_forced_two_by_two():
    emb = unit_rows(np.random.default_rng(0), 4, 5)
    batch = LabeledBatch.from_items([(emb[k], [0, 0, 1, 1][k], 1) for k in range(4)])
    triplets = mine_hard_triplets(batch)
    assert len(triplets) == 4
    assert [p for _, p, _ in triplets] == [1, 0, 3, 2]


def test_hardest_positive_is_farthest():
    emb = np.array([[0.0, 0.0], [0.1, 0.0], [0.9, 0.0], [0.0, 2.0]])
    batch = LabeledBatch.from_items([(emb[k], [7, 7, 7, 3][k], 1) for k in range(4)])
    assert mine_hard_triplets(batch)[0] == (0, 2, 3)


def test_ties_go_to_lowest_index():
    emb = np.array([[0.0, 0], [1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0]])
    batch = LabeledBatch.from_items([(emb[k], [0, 0, 0, 1, 1][k], 1) for k in range(5)])
    assert mine_hard_triplets(batch)[0] == (0, 1, 3)


def test_anchor_without_partner_is_skipped():
    emb = unit_rows(np.random.default_rng(1), 3, 4)
    batch = LabeledBatch.from_items([(emb[k], [0, 0, 1][k], 1) for k in range(3)])
    assert [a for a, _, _ in mine_hard_triplets(batch)] == [0, 1]


def test_random_batch_matches_brute_force():
    rng = np.random.default_rng(2)
    emb = unit_rows(rng, 32, 16)
    ids = rng.integers(0, 8, 32)
    batch = LabeledBatch.from_items([(emb[k], int(ids[k]), 1) for k in range(32)])
    assert mine_hard_triplets(batch) == brute_force_mining(emb, ids.tolist())


@given(st.integers(0, 10_000), st.integers(1, 64), st.integers(1, 16), st.booleans())
def test_mining_property(seed, n, k, quantised):
    rng = np.random.default_rng(seed)
    emb = unit_rows(rng, n, 4)
    if quantised:  # force many exact distance ties
        emb = np.round(emb)
    ids = rng.integers(0, k, n).tolist()
    batch = LabeledBatch.from_items([(emb[i], ids[i], 1) for i in range(n)])
    assert mine_hard_triplets(batch) == brute_force_mining(emb, ids)


def stream(n_frames, identities, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    protos = unit_rows(rng, max(identities, 1), dim)
    return {f: [Detection(f, BBox(0, 0, 10, 10), 1.0, i, protos[i]) for i in range(identities)]
            for f in range(1, n_frames + 1)}


def test_sample_batch_always_valid_on_full_stream():
    p = MiningParams()
    batch = sample_batch(stream(16, 8), p, seed=0)
    assert batch.is_valid(p) and len(batch) == 64
    assert len(set(batch.frames.tolist())) == 8


def test_sample_batch_single_object_fails():
    with pytest.raises(NoValidBatchError):
        sample_batch(stream(20, 1), MiningParams(retry_budget=5), seed=0)


def test_sample_batch_short_sequence():
    with pytest.raises(ValueError):
        sample_batch(stream(10, 8), MiningParams(), seed=0)


def test_sample_batch_deterministic():
    s = stream(100, 10, seed=3)
    p = MiningParams()
    a, b = sample_batch(s, p, seed=17), sample_batch(s, p, seed=17)
    assert np.array_equal(a.embeddings, b.embeddings)
    assert np.array_equal(a.identities, b.identities) and np.array_equal(a.frames, b.frames)
    frames = sorted(set(a.frames.tolist()))
    assert frames[-1] - frames[0] < p.window
