import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tempeo.errors import InvalidDepthError, SingularRotationError
from tempeo.geometry import (
    Intrinsics,
    Pose,
    backproject,
    compose,
    hat,
    inverse,
    orthonormality_error,
    orthonormalize,
    pixel_grid,
    project,
    se3_exp,
    se3_log,
    so3_exp,
    so3_log,
    vee,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
twists = arrays(float, 6, elements=st.floats(-1.0, 1.0)).filter(lambda x: np.linalg.norm(x[:3]) < 3.0)


def test_principal_point_projects_to_itself():
    k = Intrinsics(500, 500, 319.5, 95.5)
    px, ok = project(np.array([0.0, 0.0, 7.0]), k)
    assert ok and np.allclose(px, [319.5, 95.5])


def test_backproject_rejects_bad_depth():
    k = Intrinsics(100, 100, 10, 10)
    for d in (0.0, -1.0, np.nan):
        with pytest.raises(InvalidDepthError):
            backproject([1.0, 2.0], d, k)


def test_project_behind_camera_is_invalid():
    k = Intrinsics(100, 100, 10, 10)
    px, ok = project(np.array([[0, 0, -1.0], [0, 0, 1e-4], [1, 1, 2.0]]), k)
    assert ok.tolist() == [False, False, True]
    assert np.isnan(px[:2]).all() and np.isfinite(px[2]).all()


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(0, 1, 0, 0)
    with pytest.raises(ValueError):
        Intrinsics(1, 1, np.inf, 0)


def test_intrinsics_matrix_round_trip():
    k = Intrinsics(400, 410, 300.5, 100.25)
    assert Intrinsics.from_matrix(k.matrix) == k


def test_downsampled_intrinsics_keep_pixel_centers():
    # a ray through the center of the 2x2 block (u, v) in [0, 1] must hit pixel (0, 0)
    k = Intrinsics(200, 200, 31.5, 15.5)
    kd = k.downsampled()
    px, _ = project(backproject(np.array([0.5, 0.5]), 3.0, k), kd)
    assert np.allclose(px, [0.0, 0.0])


def test_identity_exp_log():
    assert se3_exp(np.zeros(6)).allclose(Pose.identity(), 0.0)
    assert np.array_equal(se3_log(Pose.identity()), np.zeros(6))


def test_log_near_pi_raises():
    r = so3_exp(np.array([0.0, 0.0, np.pi - 1e-8]))
    with pytest.raises(SingularRotationError):
        so3_log(r)


def test_pose_rejects_non_rotation():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Pose(2 * np.eye(3), np.zeros(3))


def test_pose_arrays_are_read_only():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.rotation[0, 0] = 2.0


def test_pixel_grid_convention():
    g = pixel_grid(2, 3)
    assert g.shape == (2, 3, 2)
    assert g[1, 2].tolist() == [2.0, 1.0]  # (u = column, v = row)


def test_reorthonormalize_after_many_compositions():
    rng = np.random.default_rng(0)
    p = Pose.identity()
    for _ in range(1000):
        p = compose(se3_exp(rng.normal(scale=0.05, size=6)), p)
    assert orthonormality_error(p.rotation) < 1e-6
    assert orthonormality_error(p.orthonormalized().rotation) < 1e-14


@given(arrays(float, 3, elements=finite))
def test_hat_vee(w):
    m = hat(w)
    assert np.allclose(m, -m.T)
    assert np.array_equal(vee(m), w)
    assert np.allclose(m @ np.array([1.0, 2.0, 3.0]), np.cross(w, [1.0, 2.0, 3.0]))


@given(twists)
def test_exp_log_round_trip(xi):
    assert np.allclose(se3_log(se3_exp(xi)), xi, atol=1e-9)


@given(twists, twists)
def test_composition_inverse_and_associativity(a, b):
    pa, pb = se3_exp(a), se3_exp(b)
    assert compose(pa, inverse(pa)).allclose(Pose.identity(), 1e-12)
    pc = se3_exp(a - b)
    assert compose(compose(pa, pb), pc).allclose(compose(pa, compose(pb, pc)), 1e-12)


@given(twists, arrays(float, 3, elements=finite))
def test_pose_apply_matches_matrix(xi, x):
    p = se3_exp(xi)
    hom = p.matrix @ np.append(x, 1.0)
    assert np.allclose(p.apply(x), hom[:3])


@given(arrays(float, (3, 3), elements=st.floats(-0.01, 0.01)))
def test_orthonormalize_near_rotation(noise):
    r = so3_exp(np.array([0.3, -0.2, 0.1])) + noise
    q = orthonormalize(r)
    assert orthonormality_error(q) < 1e-12 and np.linalg.det(q) > 0


@settings(max_examples=50)
@given(st.floats(0.0, 1e-6), arrays(float, 3, elements=st.floats(-1, 1)).filter(lambda a: np.linalg.norm(a) > 0.1))
def test_small_angle_branch_is_continuous(theta, axis):
    w = axis / np.linalg.norm(axis) * theta
    r = so3_exp(w)
    assert np.allclose(r, np.eye(3) + hat(w), atol=1e-12)
    assert np.allclose(so3_log(r), w, atol=1e-15)


def test_backproject_examples():
    k = Intrinsics(100, 100, 50, 50)
    assert np.allclose(backproject([50, 50], 10.0, k), [0, 0, 10])
    assert np.allclose(backproject([150, 50], 1.0, k), [1, 0, 1])
    assert np.allclose(backproject([30, 70], 5.0, k), [-1.0, 1.0, 5.0])


def test_project_examples():
    k = Intrinsics(100, 120, 50, 40)
    px, ok = project(np.array([-1.0, 0.0, 10.0]), k)
    assert ok and np.allclose(px, [40.0, 40.0])
    _, ok = project(np.array([0.0, 0.0, -1.0]), k)
    assert not ok


def test_quarter_turn_about_z():
    p = se3_exp([0, 0, np.pi / 2, 0, 0, 0])
    assert np.allclose(p.apply([1.0, 0, 0]), [0, 1.0, 0])
