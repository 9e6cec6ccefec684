"""Pinhole camera model and SE(3) pose algebra.

Pixel convention: ``(u, v)`` = (column, row), with the origin at the center of
the top-left pixel. Twists are 6-vectors ``(omega, v)``: an axis-angle rotation
(radians) followed by the translational part of the se(3) tangent (meters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDepthError, SingularRotationError

Z_MIN = 1e-3
SMALL_ANGLE = 1e-8
LOG_SINGULAR_EPS = 1e-6
ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val}")
            object.__setattr__(self, name, val)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, k) -> "Intrinsics":
        k = np.asarray(k, dtype=float)
        return cls(k[0, 0], k[1, 1], k[0, 2], k[1, 2])

    def scaled(self, sx: float, sy: float) -> "Intrinsics":
        """Plain similar-triangle rescale (fx, cx by ``sx``; fy, cy by ``sy``)."""
        return Intrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy)

    def downsampled(self) -> "Intrinsics":
        """Intrinsics for a 2x box-downsampled image under the pixel-center convention."""
        return Intrinsics(self.fx / 2, self.fy / 2, (self.cx - 0.5) / 2, (self.cy - 0.5) / 2)


def backproject(px, depth, k: Intrinsics) -> np.ndarray:
    """Lift pixel(s) ``(..., 2)`` at ``depth`` (meters) to camera-frame points ``(..., 3)``."""
    px = np.asarray(px, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if np.any(~(depth > 0)):
        raise InvalidDepthError("depth must be positive")
    x = (px[..., 0] - k.cx) / k.fx * depth
    y = (px[..., 1] - k.cy) / k.fy * depth
    return np.stack(np.broadcast_arrays(x, y, depth), axis=-1)


def project(points, k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points ``(..., 3)``; returns pixels ``(..., 2)`` and validity.

    Points with ``z <= Z_MIN`` are invalid and project to NaN.
    """
    points = np.asarray(points, dtype=float)
    z = points[..., 2]
    valid = z > Z_MIN
    safe_z = np.where(valid, z, 1.0)
    u = k.fx * points[..., 0] / safe_z + k.cx
    v = k.fy * points[..., 1] / safe_z + k.cy
    px = np.stack([u, v], axis=-1)
    px[~valid] = np.nan
    return px, valid


def hat(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def vee(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def orthonormalize(r) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def orthonormality_error(r) -> float:
    r = np.asarray(r, dtype=float)
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping frame-t camera coordinates to frame-(t+1) coordinates."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        if orthonormality_error(r) > ORTHO_TOL or np.linalg.det(r) < 0:
            raise ValueError("rotation is not a proper orthonormal matrix")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def inverse(self) -> "Pose":
        return inverse(self)

    def log(self) -> np.ndarray:
        return se3_log(self)

    def orthonormalized(self) -> "Pose":
        return Pose(orthonormalize(self.rotation), self.translation)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"Pose(twist={np.array2string(se3_log(self), precision=6)})"


def compose(a: Pose, b: Pose) -> Pose:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -rt @ p.translation)


SERIES_ANGLE = 1e-2  # below this the Jacobian coefficients use their Taylor series


def _coefficients(theta: float) -> tuple[float, float, float, float]:
    """``sin(t)/t``, ``(1-cos t)/t^2``, ``(t-sin t)/t^3`` and the inverse-Jacobian term.

    Series near zero and half-angle forms elsewhere keep all four free of
    cancellation.
    """
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
        return a, b, c, d
    half = 0.5 * theta
    a = np.sin(theta) / theta
    b = 0.5 * (np.sin(half) / half) ** 2
    c = (1.0 - a) / t2
    d = (1.0 - half / np.tan(half)) / t2
    return a, b, c, d


def so3_exp(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega)
    w = hat(omega)
    if theta < SMALL_ANGLE:
        return np.eye(3) + w + 0.5 * (w @ w)
    a, b, _, _ = _coefficients(theta)
    return np.eye(3) + a * w + b * (w @ w)


def _left_jacobian(omega) -> np.ndarray:
    _, b, c, _ = _coefficients(np.linalg.norm(omega))
    w = hat(omega)
    return np.eye(3) + b * w + c * (w @ w)


def _left_jacobian_inv(omega) -> np.ndarray:
    _, _, _, d = _coefficients(np.linalg.norm(omega))
    w = hat(omega)
    return np.eye(3) - 0.5 * w + d * (w @ w)


def so3_log(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    axis2 = vee(r - r.T)  # 2 sin(theta) * axis
    s = 0.5 * np.linalg.norm(axis2)
    c = 0.5 * (np.trace(r) - 1.0)
    theta = np.arctan2(s, c)
    if theta >= np.pi - LOG_SINGULAR_EPS:
        raise SingularRotationError(f"rotation angle {theta:.9f} too close to pi for log")
    if theta < SMALL_ANGLE:
        return 0.5 * axis2
    return theta / (2.0 * s) * axis2


def se3_exp(xi) -> Pose:
    xi = np.asarray(xi, dtype=float).reshape(6)
    omega, v = xi[:3], xi[3:]
    return Pose(so3_exp(omega), _left_jacobian(omega) @ v)


def se3_log(p: Pose) -> np.ndarray:
    omega = so3_log(p.rotation)
    return np.concatenate([omega, _left_jacobian_inv(omega) @ p.translation])


def pixel_grid(height: int, width: int) -> np.ndarray:
    """``(H, W, 2)`` array of ``(u, v)`` pixel-center coordinates."""
    v, u = np.mgrid[0:height, 0:width].astype(float)
    return np.stack([u, v], axis=-1)
