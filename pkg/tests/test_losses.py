import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from helpers import camera, depth_map, smooth_image, small_pose
from tempeo import losses
from tempeo.errors import DomainError, SizeError, UnitsError
from tempeo.geometry import Pose
from tempeo.imagery import FlowField, Image, ScalarMap
from tempeo.warp import flow_warp, rigid_flow


def prob(a):
    return ScalarMap(np.asarray(a, float), "probability")


def test_depth_l1_basic_and_units():
    a = ScalarMap(np.zeros((2, 2)), "normalized")
    b = ScalarMap(np.full((2, 2), 0.5), "normalized", [[1, 1], [1, 0]])
    lv = losses.depth_l1(a, b)
    assert lv.value == 0.5 and lv.valid_pixel_count == 3
    with pytest.raises(UnitsError):
        losses.depth_l1(ScalarMap(np.zeros((2, 2)), "meters"), b)


def test_empty_support_is_flagged():
    a = ScalarMap(np.zeros((2, 2)), "normalized", np.zeros((2, 2), bool))
    lv = losses.depth_l1(a, a)
    assert lv.empty and lv.value == 0.0
    assert losses.batch_mean([lv]).empty


def test_batch_mean_skips_empty():
    lv = losses.batch_mean([losses.LossValue(1.0, 4), losses.LossValue(0.0, 0), losses.LossValue(3.0, 2)])
    assert lv.value == 2.0 and lv.valid_pixel_count == 6


def test_seg_modes():
    p, m = prob([[0.9, 0.2]]), prob([[1.0, 0.0]])
    bce = losses.moving_seg_loss(p, m, "bce").value
    assert np.isclose(bce, -(np.log(0.9) + np.log(0.8)) / 2)
    lit = losses.moving_seg_loss(p, m, "literal").value
    assert np.isclose(lit, -np.log(0.9) / 2)
    # the positive-only form vanishes on an all-static ground truth
    assert losses.moving_seg_loss(p, prob([[0.0, 0.0]]), "literal").value == 0.0
    with pytest.raises(ValueError):
        losses.moving_seg_loss(p, m, "focal")


def test_seg_clamps_and_domain():
    lv = losses.moving_seg_loss(prob([[0.0]]), prob([[1.0]]))
    assert np.isfinite(lv.value) and np.isclose(lv.value, -np.log(1e-7))
    with pytest.raises(DomainError):
        losses.moving_seg_loss(prob([[1.1]]), prob([[1.0]]))


def test_rtc_zero_for_consistent_frames():
    rng = np.random.default_rng(0)
    h, w = 20, 24
    k = camera(h, w)
    frame_t1 = Image(smooth_image(rng, h, w))
    depth = depth_map(rng, h, w)
    pose = small_pose(rng)
    flow, _ = rigid_flow(depth, pose, k)
    frame_t, _ = flow_warp(frame_t1, flow)
    ones = prob(np.ones((h, w)))
    lv = losses.robust_temporal_loss(frame_t, frame_t1, depth, pose, ones, ones, k)
    assert lv.value < 1e-28 and lv.valid_pixel_count > 0


def test_rtc_masks_remove_pixels_monotonically():
    rng = np.random.default_rng(1)
    h, w = 16, 16
    k = camera(h, w)
    i0, i1 = Image(rng.random((h, w))), Image(rng.random((h, w)))
    depth, pose = depth_map(rng, h, w), small_pose(rng)
    ones = prob(np.ones((h, w)))
    full = losses.robust_temporal_loss(i0, i1, depth, pose, ones, ones, k)
    m = np.ones((h, w))
    m[4:9, 3:10] = 0.0
    part = losses.robust_temporal_loss(i0, i1, depth, pose, prob(m), prob(m), k)
    assert part.valid_pixel_count < full.valid_pixel_count
    zero = losses.robust_temporal_loss(i0, i1, depth, pose, prob(np.zeros((h, w))), ones, k)
    assert zero.empty


def test_photometric_loss_is_all_static_rtc():
    rng = np.random.default_rng(2)
    h, w = 12, 12
    k = camera(h, w)
    i0, i1 = Image(rng.random((h, w, 3))), Image(rng.random((h, w, 3)))
    depth, pose = depth_map(rng, h, w), small_pose(rng)
    ones = prob(np.ones((h, w)))
    assert (losses.photometric_loss(i0, i1, depth, pose, k)
            == losses.robust_temporal_loss(i0, i1, depth, pose, ones, ones, k))
    colour = losses.photometric_loss(i0, i1, depth, pose, k, grayscale=False)
    assert colour.value != losses.photometric_loss(i0, i1, depth, pose, k).value


def test_stc_zero_when_flow_explains_frames():
    rng = np.random.default_rng(3)
    a = Image(smooth_image(rng, 10, 12))
    flow = FlowField(np.full((10, 12, 2), 0.5))
    b, _ = flow_warp(a, flow)
    assert losses.synthetic_temporal_loss(a, b, flow).value == 0.0
    with pytest.raises(SizeError):
        losses.synthetic_temporal_loss(a, Image(np.zeros((10, 11))), flow)


def test_ssim_identity_and_border():
    rng = np.random.default_rng(4)
    a = Image(rng.random((12, 15)))
    s = losses.ssim(a, a)
    assert np.allclose(s.data[s.valid], 1.0)
    assert s.valid.sum() == (12 - 6) * (15 - 6)
    assert not s.valid[:3].any() and not s.valid[:, -3:].any()
    assert losses.ssim_loss(a, a).value < 1e-12
    with pytest.raises(SizeError):
        losses.ssim(Image(np.ones((6, 20))), Image(np.ones((6, 20))))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ssim_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = Image(rng.random((9, 10))), Image(rng.random((9, 10)))
    ab, ba = losses.ssim_loss(a, b).value, losses.ssim_loss(b, a).value
    assert abs(ab - ba) < 1e-12 and 0.0 <= ab <= 1.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_stc_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((8, 9)), rng.random((8, 9))
    flow = rng.uniform(-3, 3, (8, 9, 2))
    lv = losses.synthetic_temporal_loss(Image(a), Image(b), FlowField(flow))
    want, n = oracles.synthetic_temporal(a, b, flow)
    assert lv.valid_pixel_count == n and abs(lv.value - want) < 1e-12


def test_gradients_vanish_outside_support():
    rng = np.random.default_rng(5)
    h, w = 12, 12
    k = camera(h, w)
    i0, i1 = Image(rng.random((h, w))), Image(rng.random((h, w)))
    depth, pose = depth_map(rng, h, w), Pose.identity()
    m = np.ones((h, w))
    m[:, :6] = 0.0
    g_d, g_f = losses.robust_temporal_loss_grad(i0, i1, depth, pose, prob(m), prob(np.ones((h, w))), k)
    assert np.all(g_d[:, :6] == 0) and np.all(g_f[:, :6] == 0)


def test_depth_l1_examples():
    rng = np.random.default_rng(6)
    gt = ScalarMap(rng.uniform(-1, 0.5, (4, 4)), "normalized")
    assert losses.depth_l1(gt, gt).value == 0.0
    assert np.isclose(losses.depth_l1(ScalarMap(gt.data + 0.5, "normalized"), gt).value, 0.5)
    pred = ScalarMap(rng.uniform(-1, 1, (4, 4)), "normalized")
    assert np.isclose(losses.depth_l1(pred, gt).value, oracles.depth_l1(pred.data, gt.data, np.ones((4, 4), bool)))


def test_seg_examples():
    m = (np.random.default_rng(7).random((4, 4)) < 0.5).astype(float)
    assert losses.moving_seg_loss(prob(m), prob(m)).value <= -np.log(1 - 1e-7) + 1e-15
    p = np.random.default_rng(8).random((4, 4))
    assert losses.moving_seg_loss(prob(p), prob(np.zeros((4, 4))), "literal").value == 0.0
    assert np.isclose(losses.moving_seg_loss(prob(p), prob(m)).value, oracles.seg_loss(p, m, "bce"))


def test_ssim_constant_images():
    lv = losses.ssim_loss(Image(np.zeros((9, 9))), Image(np.ones((9, 9))))
    c1 = 0.01**2
    assert np.isclose(lv.value, (1 - c1 / (1 + c1)) / 2)
    assert 0.49 < lv.value < 0.5


def test_rtc_on_rendered_scene_and_mover():
    from tempeo.geometry import inverse
    from tempeo.movemask import make_moving_mask, residual_flow, static_weight
    from tempeo.synth import make_pair, random_mover

    clean = make_pair(np.random.default_rng(11))
    ones = prob(np.ones(clean.depth_t.shape))
    lv = losses.robust_temporal_loss(clean.frame_t, clean.frame_t1, clean.depth_t, clean.pose, ones, ones, clean.k)
    assert lv.value < 1e-4

    rng = np.random.default_rng(12)
    pair = make_pair(rng, mover=random_mover(rng))
    m_t = make_moving_mask(residual_flow(pair.flow_forward, pair.depth_t, pair.pose, pair.k), pair.instances_t)
    m_t1 = make_moving_mask(residual_flow(pair.flow_backward, pair.depth_t1, inverse(pair.pose), pair.k),
                            pair.instances_t1)
    args = (pair.frame_t, pair.frame_t1, pair.depth_t, pair.pose)
    unmasked = losses.robust_temporal_loss(*args, ones, ones, pair.k)
    masked = losses.robust_temporal_loss(*args, static_weight(m_t), static_weight(m_t1), pair.k)
    assert masked.value < unmasked.value
    assert masked.value < 1e-4


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_masking(seed):
    rng = np.random.default_rng(seed)
    h, w = 12, 12
    k = camera(h, w)
    i0, i1 = Image(rng.random((h, w))), Image(rng.random((h, w)))
    depth, pose = depth_map(rng, h, w), small_pose(rng)
    ones = prob(np.ones((h, w)))
    m = prob((rng.random((h, w)) > 0.3).astype(float))
    full = losses.robust_temporal_loss(i0, i1, depth, pose, ones, ones, k)
    part = losses.robust_temporal_loss(i0, i1, depth, pose, m, m, k)
    # binary masks: surviving pixels keep their unmasked residual, so the sum cannot grow
    assert part.valid_pixel_count <= full.valid_pixel_count
    assert part.value * part.valid_pixel_count <= full.value * full.valid_pixel_count + 1e-12
