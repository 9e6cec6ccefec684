import numpy as np
import pytest

from helpers import camera, smooth_depth, smooth_image
from tempeo.ddvo import SolverConfig, photometric_jacobian, refine_pose
from tempeo.errors import NoSupportError, SizeError
from tempeo.geometry import Pose, se3_exp
from tempeo.imagery import Image, ScalarMap
from tempeo.synth import make_pair, twist_error


@pytest.fixture(scope="module")
def scene():
    pose = se3_exp([0.0, np.deg2rad(0.5), 0.0, 0.05, 0.0, 0.0])
    return make_pair(np.random.default_rng(21), pose=pose)


def test_static_camera_returns_identity():
    rng = np.random.default_rng(0)
    img = Image(smooth_image(rng, 64, 80))
    depth = smooth_depth(rng, 64, 80)
    est, trace = refine_pose(img, img, depth, Pose.identity(), None, camera(64, 80))
    assert twist_error(est, Pose.identity()) < 1e-6
    assert trace.termination == "converged"


def test_recovers_small_motion(scene):
    est, trace = refine_pose(scene.frame_t, scene.frame_t1, scene.depth_t, Pose.identity(), None, scene.k)
    assert twist_error(est, scene.pose) < 1e-3
    for level in range(4):
        costs = trace.accepted_costs(level)
        assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_trace_csv_rows(scene):
    _, trace = refine_pose(scene.frame_t, scene.frame_t1, scene.depth_t, Pose.identity(), None, scene.k,
                           SolverConfig(max_iterations=3))
    rows = trace.to_csv_rows()
    assert rows[0] == ["level", "iteration", "cost", "step_norm", "damping", "accepted"]
    assert {r[0] for r in rows[1:]} == {0, 1, 2, 3}
    assert trace.termination in ("converged", "max_iterations", "stalled")


def test_zero_weight_means_no_support(scene):
    zero = ScalarMap(np.zeros(scene.depth_t.shape), "probability")
    with pytest.raises(NoSupportError):
        refine_pose(scene.frame_t, scene.frame_t1, scene.depth_t, Pose.identity(), zero, scene.k)


def test_shape_checks():
    img = Image(np.zeros((64, 64)))
    with pytest.raises(SizeError):
        refine_pose(img, Image(np.zeros((64, 63))), ScalarMap(np.ones((64, 64)), "meters"),
                    Pose.identity(), None, camera(64, 64))
    with pytest.raises(SizeError):
        refine_pose(Image(np.zeros((30, 30))), Image(np.zeros((30, 30))), ScalarMap(np.ones((30, 30)), "meters"),
                    Pose.identity(), None, camera(30, 30))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(levels=0)
    with pytest.raises(ValueError):
        SolverConfig(huber_delta=-1)


def test_constant_target_gives_zero_jacobian():
    rng = np.random.default_rng(1)
    jac, valid = photometric_jacobian(Image(np.full((10, 12), 0.4)), smooth_depth(rng, 10, 12),
                                      se3_exp(rng.normal(scale=0.01, size=6)), camera(10, 12))
    assert valid.valid.any() and not jac.any()


def test_translation_column_on_ramp():
    # I(u, v) = s * u: the tx column is -(dI/du) * fx / z
    h, w, s = 10, 14, 0.05
    k = camera(h, w)
    ramp = Image(s * np.tile(np.arange(w, dtype=float), (h, 1)))
    depth = ScalarMap(np.full((h, w), 4.0), "meters")
    jac, valid = photometric_jacobian(ramp, depth, Pose.identity(), k)
    assert np.allclose(jac[valid.valid][:, 3], -s * k.fx / 4.0)
    assert np.allclose(jac[valid.valid][:, 4], 0.0)
    # tz moves u by -(u - cx)/z, so its column is s * fx * x / z^2 with x/z = (u - cx)/fx
    u = np.tile(np.arange(w, dtype=float), (h, 1))
    want_tz = s * (u - k.cx) / 4.0
    assert np.allclose(jac[..., 5][valid.valid], want_tz[valid.valid])


def test_single_pixel_finite_difference():
    from tempeo.ddvo import photometric_residual

    rng = np.random.default_rng(2)
    h, w = 12, 12
    k = camera(h, w)
    f0, f1 = Image(smooth_image(rng, h, w)), Image(smooth_image(rng, h, w))
    depth = ScalarMap(np.full((h, w), 3.0), "meters")
    pose = se3_exp([0.003, -0.002, 0.001, 0.011, 0.007, -0.013])
    jac, _ = photometric_jacobian(f1, depth, pose, k)
    i, j, step = 5, 6, 1e-6
    for c in range(6):
        e = np.zeros(6)
        e[c] = step
        rp = photometric_residual(f0, f1, depth, se3_exp(e) @ pose, k).data[i, j]
        rm = photometric_residual(f0, f1, depth, se3_exp(-e) @ pose, k).data[i, j]
        fd = (rp - rm) / (2 * step)
        assert abs(jac[i, j, c] - fd) <= 1e-4 * max(abs(fd), 1e-6)
