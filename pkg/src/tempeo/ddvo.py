"""Direct visual odometry: refine a relative pose by photometric alignment.

Minimizes the static-weighted Huber cost of ``r(p) = I_t(p) - I_{t+1}(w(p))``
where ``w`` warps frame-t pixels into frame t+1 through ``depth_t`` and the
pose. Levenberg-Marquardt runs coarse-to-fine over an image pyramid, with
left-multiplied twist updates ``T <- exp(delta) T``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NoSupportError
from .geometry import Intrinsics, Pose, Z_MIN, compose, se3_exp
from .imagery import (
    Image,
    ScalarMap,
    check_same_shape,
    downsample_map,
    pyramid,
    sample_bilinear,
    to_gray,
)
from .warp import transformed_points

log = logging.getLogger(__name__)

REORTHO_EVERY = 100


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 50
    levels: int = 4
    tolerance: float = 1e-8
    cost_tolerance: float = 1e-10
    lambda0: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    lambda_max: float = 1e8
    huber_delta: float = 0.1
    min_size: int = 8

    def __post_init__(self):
        for name in ("max_iterations", "levels", "tolerance", "cost_tolerance", "lambda0", "lambda_up",
                     "lambda_down", "lambda_max", "huber_delta", "min_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class IterationRecord:
    level: int
    iteration: int
    cost: float
    step_norm: float
    damping: float
    accepted: bool


@dataclass
class SolveTrace:
    records: list[IterationRecord] = field(default_factory=list)
    termination: str = ""

    def accepted_costs(self, level: int) -> list[float]:
        return [r.cost for r in self.records if r.level == level and r.accepted]

    def to_csv_rows(self) -> list[list]:
        rows = [["level", "iteration", "cost", "step_norm", "damping", "accepted"]]
        for r in self.records:
            rows.append([r.level, r.iteration, repr(r.cost), repr(r.step_norm),
                         repr(r.damping), int(r.accepted)])
        return rows


def _gray(img) -> np.ndarray:
    return to_gray(img.data if isinstance(img, Image) else img)


def _linearize(frame_t1: np.ndarray, depth_t: ScalarMap, pose: Pose, k: Intrinsics,
               frame_t: np.ndarray | None = None, with_jacobian: bool = True):
    pts, ok = transformed_points(depth_t, pose, k)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    ok = ok & (z > Z_MIN)
    zs = np.where(ok, z, 1.0)
    u = k.fx * x / zs + k.cx
    v = k.fy * y / zs + k.cy
    u = np.where(ok, u, -1.0)
    v = np.where(ok, v, -1.0)
    if with_jacobian:
        val, inb, gu, gv = sample_bilinear(frame_t1, u, v, with_grad=True)
    else:
        val, inb = sample_bilinear(frame_t1, u, v)
    valid = ok & inb
    r = None if frame_t is None else np.where(valid, frame_t - val, 0.0)
    if not with_jacobian:
        return r, valid, None
    # d intensity / d point, then through the left-perturbation generators
    g = np.stack([gu * k.fx / zs, gv * k.fy / zs,
                  -(gu * k.fx * x + gv * k.fy * y) / zs**2], axis=-1)
    jac = -np.concatenate([np.cross(pts, g), g], axis=-1)
    jac[~valid] = 0.0
    return r, valid, jac


def photometric_jacobian(frame_t1: Image, depth_t: ScalarMap, pose: Pose, k: Intrinsics):
    """Per-pixel ``d residual / d twist`` at ``pose``, shape ``(H, W, 6)``.

    Returns ``(jacobian, valid)``; invalid pixels carry zero rows. The twist is
    ordered ``(omega, v)`` and perturbs the pose on the left.
    """
    check_same_shape(frame_t1, depth_t)
    _, valid, jac = _linearize(_gray(frame_t1), depth_t, pose, k)
    return jac, ScalarMap(valid.astype(float), "probability", valid)


def photometric_residual(frame_t: Image, frame_t1: Image, depth_t: ScalarMap, pose: Pose,
                         k: Intrinsics) -> ScalarMap:
    """``I_t(p) - I_{t+1}(w(p))`` on grayscale intensities."""
    check_same_shape(frame_t, frame_t1, depth_t)
    r, valid, _ = _linearize(_gray(frame_t1), depth_t, pose, k, _gray(frame_t), False)
    return ScalarMap(r, "intensity", valid)


def _huber(r: np.ndarray, delta: float):
    a = np.abs(r)
    rho = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    w = np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-300))
    return rho, w


class _Level:
    def __init__(self, i0, i1, depth, weight, k, delta):
        self.i0, self.i1, self.depth, self.k, self.delta = i0, i1, depth, k, delta
        self.weight = np.where(weight.valid, np.clip(weight.data, 0.0, None), 0.0)

    def evaluate(self, pose: Pose, with_jacobian: bool = True):
        r, valid, jac = _linearize(self.i1, self.depth, pose, self.k, self.i0, with_jacobian)
        support = valid & (self.weight > 0)
        n = int(support.sum())
        if n == 0:
            return np.inf, None, None, None, 0
        rs = r[support]
        ws = self.weight[support]
        rho, wh = _huber(rs, self.delta)
        cost = float(np.sum(ws * rho) / n)
        js = jac[support] if jac is not None else None
        return cost, rs, ws * wh, js, n


def refine_pose(
    frame_t: Image,
    frame_t1: Image,
    depth_t: ScalarMap,
    init: Pose,
    static_weight: ScalarMap | None,
    k: Intrinsics,
    cfg: SolverConfig | None = None,
) -> tuple[Pose, SolveTrace]:
    """Photometrically refine ``init`` (frame t -> frame t+1).

    ``static_weight`` multiplies each frame-t pixel's cost (1 = static, 0 =
    moving); ``None`` weights all pixels equally. Raises NoSupportError when the
    finest level has no pixel with valid warp and non-zero weight.
    """
    cfg = cfg or SolverConfig()
    check_same_shape(frame_t, frame_t1, depth_t)
    if static_weight is None:
        static_weight = ScalarMap(np.ones(frame_t.shape), "probability")
    check_same_shape(frame_t, static_weight)
    if not (np.all(np.isfinite(init.rotation)) and np.all(np.isfinite(init.translation))):
        raise ValueError("initial pose must be finite")

    imgs0 = pyramid(Image(_gray(frame_t)), cfg.levels, cfg.min_size)
    imgs1 = pyramid(Image(_gray(frame_t1)), cfg.levels, cfg.min_size)
    depths, weights, ks = [depth_t], [static_weight], [k]
    for _ in range(cfg.levels - 1):
        depths.append(downsample_map(depths[-1]))
        weights.append(downsample_map(weights[-1]))
        ks.append(ks[-1].downsampled())

    pose = init
    trace = SolveTrace()
    compositions = 0
    reason = "max_iterations"
    for level in reversed(range(cfg.levels)):
        lvl = _Level(imgs0[level].data, imgs1[level].data, depths[level], weights[level],
                     ks[level], cfg.huber_delta)
        cost, r, w, jac, n = lvl.evaluate(pose)
        if n == 0:
            if level == 0:
                raise NoSupportError("no valid weighted pixels at the finest pyramid level")
            log.debug("level %d has no support; skipping", level)
            continue
        trace.records.append(IterationRecord(level, 0, cost, 0.0, cfg.lambda0, True))
        lam = cfg.lambda0
        reason = "max_iterations"
        for it in range(1, cfg.max_iterations + 1):
            jw = jac * w[:, None]
            hess = jac.T @ jw
            grad = jw.T @ r
            damped = hess + lam * np.diag(np.diag(hess) + 1e-12)
            try:
                step = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(damped, grad, rcond=None)[0]
            step_norm = float(np.linalg.norm(step))
            if step_norm < cfg.tolerance:
                trace.records.append(IterationRecord(level, it, cost, step_norm, lam, False))
                reason = "converged"
                break
            candidate = compose(se3_exp(step), pose)
            if (compositions + 1) % REORTHO_EVERY == 0:
                candidate = candidate.orthonormalized()
            c_cost, *_ = lvl.evaluate(candidate, with_jacobian=False)
            if c_cost < cost:
                decrease = (cost - c_cost) / max(cost, 1e-300)
                pose = candidate
                cost, r, w, jac, _ = lvl.evaluate(pose)
                compositions += 1
                lam = max(lam / cfg.lambda_down, 1e-12)
                trace.records.append(IterationRecord(level, it, cost, step_norm, lam, True))
                if decrease < cfg.cost_tolerance:
                    reason = "converged"
                    break
            else:
                lam *= cfg.lambda_up
                trace.records.append(IterationRecord(level, it, cost, step_norm, lam, False))
                if lam > cfg.lambda_max:
                    reason = "stalled"
                    break
        log.debug("level %d finished: %s, cost %.3g", level, reason, cost)
    trace.termination = reason
    return pose, trace
