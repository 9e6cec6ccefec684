import numpy as np

from tempeo.synth import make_pair, random_mover
from tempeo.warp import flow_warp, rigid_flow


def test_depth_positive_and_flow_matches_rigid_for_static_scene():
    pair = make_pair(np.random.default_rng(0))
    assert pair.depth_t.valid.all() and pair.depth_t.data.min() > 1.0
    rigid, valid = rigid_flow(pair.depth_t, pair.pose, pair.k)
    diff = np.abs(rigid.data - pair.flow_forward.data)[valid.valid]
    assert diff.max() < 1e-8
    assert not pair.object_mask_t.any() and not pair.corrupted_t.any()


def test_backward_flow_aligns_frames():
    pair = make_pair(np.random.default_rng(1))
    warped, valid = flow_warp(pair.frame_t, pair.flow_backward)
    assert np.abs(warped.data - pair.frame_t1.data)[valid.valid].mean() < 0.01


def test_mover_is_labelled_and_deterministic():
    a = make_pair(np.random.default_rng(2), mover=random_mover(np.random.default_rng(3)))
    b = make_pair(np.random.default_rng(2), mover=random_mover(np.random.default_rng(3)))
    assert np.array_equal(a.frame_t.data, b.frame_t.data)
    assert a.object_mask_t.any()
    assert np.array_equal(a.object_mask_t, a.instances_t > 0)
    assert a.corrupted_t[a.object_mask_t].all()
    assert 0.05 < a.corrupted_t.mean() < 0.2
