"""Ray-cast synthetic scenes with exact depth, flow, pose and moving-object labels.

Scenes are unions of textured planes (optionally bounded) seen by a pinhole
camera. Everything here is computed by casting a ray per pixel and evaluating
an analytic texture at the hit point, so it is independent of the warping code
it is used to check. World coordinates coincide with camera t.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Intrinsics, Pose, compose, inverse, se3_exp, se3_log
from .imagery import FlowField, Image, ScalarMap


@dataclass
class SolidTexture:
    """Sum of 3-D sinusoids, evaluated at points relative to an anchor."""

    freqs: np.ndarray  # (n, 3) cycles per meter
    phases: np.ndarray
    amps: np.ndarray
    base: float = 0.5

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        arg = 2 * np.pi * (pts @ self.freqs.T) + self.phases
        return np.clip(self.base + np.sin(arg) @ self.amps, 0.0, 1.0)


def random_texture(rng: np.random.Generator, n: int = 8, fmin: float = 0.3, fmax: float = 0.9,
                   amp: float = 0.07, base: float = 0.5) -> SolidTexture:
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    freqs = dirs * rng.uniform(fmin, fmax, (n, 1))
    return SolidTexture(freqs, rng.uniform(0, 2 * np.pi, n), np.full(n, amp), base)


@dataclass
class Surface:
    """Plane ``normal . X = offset``, optionally bounded in its own 2-D frame."""

    normal: np.ndarray
    offset: float
    texture: SolidTexture
    anchor: np.ndarray  # texture and bounds are expressed relative to this point
    basis: np.ndarray | None = None  # (2, 3) in-plane axes for ``bounds``
    bounds: tuple[float, float, float, float] | None = None  # a_min, a_max, b_min, b_max
    instance: int = 0

    def moved(self, shift) -> "Surface":
        shift = np.asarray(shift, dtype=float)
        return replace(self, offset=self.offset + float(self.normal @ shift),
                       anchor=self.anchor + shift)

    def shade(self, pts: np.ndarray) -> np.ndarray:
        return self.texture(pts - self.anchor)

    def plane_coords(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.anchor) @ self.basis.T


@dataclass
class SceneConfig:
    height: int = 192
    width: int = 640
    focal: float = 370.0
    back_wall: float = 12.0
    floor: float = 1.6
    ceiling: float = -2.5
    left_wall: float = -6.0
    right_wall: float = 7.0

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.focal, self.focal, (self.width - 1) / 2, (self.height - 1) / 2)


def room(rng: np.random.Generator, cfg: SceneConfig) -> list[Surface]:
    """Closed room of five walls sharing one continuous solid texture."""
    tex = random_texture(rng)
    zero = np.zeros(3)
    planes = [
        ([0, 0, 1], cfg.back_wall),
        ([0, 1, 0], cfg.floor),
        ([0, 1, 0], cfg.ceiling),
        ([1, 0, 0], cfg.left_wall),
        ([1, 0, 0], cfg.right_wall),
    ]
    return [Surface(np.asarray(n, float), float(d), tex, zero) for n, d in planes]


def box_face(rng: np.random.Generator, center, width: float, height: float,
             instance: int = 1) -> Surface:
    """Fronto-parallel textured rectangle (a moving object's visible face)."""
    c = np.asarray(center, float)
    tex = random_texture(rng, n=6, fmin=0.8, fmax=1.6, amp=0.1, base=0.4)
    return Surface(np.array([0.0, 0.0, 1.0]), float(c[2]), tex, c,
                   basis=np.array([[1.0, 0, 0], [0, 1.0, 0]]),
                   bounds=(-width / 2, width / 2, -height / 2, height / 2), instance=instance)


@dataclass
class Render:
    image: np.ndarray
    depth: np.ndarray
    points: np.ndarray  # world hit points (H, W, 3)
    surface: np.ndarray  # index of the surface hit, -1 for none
    instance: np.ndarray


def render(surfaces: list[Surface], world_to_cam: np.ndarray, cfg: SceneConfig) -> Render:
    """Ray-cast every pixel center against ``surfaces``."""
    h, w = cfg.height, cfg.width
    k = cfg.intrinsics
    rot = world_to_cam[:3, :3]
    trans = world_to_cam[:3, 3]
    v, u = np.mgrid[0:h, 0:w].astype(float)
    d_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    d_world = d_cam @ rot  # R^T d for each pixel
    origin = -rot.T @ trans

    best = np.full((h, w), np.inf)
    sid = np.full((h, w), -1)
    for i, s in enumerate(surfaces):
        denom = d_world @ s.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = (s.offset - s.normal @ origin) / denom
        hit = np.isfinite(dist) & (dist > 1e-6)
        if s.bounds is not None:
            pts = origin + dist[..., None] * d_world
            ab = s.plane_coords(np.where(hit[..., None], pts, 0.0))
            a0, a1, b0, b1 = s.bounds
            hit &= (ab[..., 0] >= a0) & (ab[..., 0] <= a1) & (ab[..., 1] >= b0) & (ab[..., 1] <= b1)
        closer = hit & (dist < best)
        best = np.where(closer, dist, best)
        sid = np.where(closer, i, sid)

    pts = origin + np.where(np.isfinite(best), best, 0.0)[..., None] * d_world
    image = np.zeros((h, w))
    inst = np.zeros((h, w), dtype=np.int64)
    for i, s in enumerate(surfaces):
        sel = sid == i
        image[sel] = s.shade(pts[sel])
        inst[sel] = s.instance
    # ray parameter equals camera-frame z because d_cam has unit z
    depth = np.where(sid >= 0, best, 0.0)
    return Render(image, depth, pts, sid, inst)


def _project(pts_cam: np.ndarray, k: Intrinsics) -> np.ndarray:
    z = pts_cam[..., 2]
    return np.stack([k.fx * pts_cam[..., 0] / z + k.cx, k.fy * pts_cam[..., 1] / z + k.cy], axis=-1)


def random_pose(rng: np.random.Generator, max_rot_deg: float = 2.0, max_trans: float = 0.2) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(0.2, 1.0) * max_rot_deg)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t = direction * rng.uniform(0.2, 1.0) * max_trans
    rot = se3_exp(np.concatenate([axis * angle, np.zeros(3)])).rotation
    return Pose(rot, t)


def random_mover(rng: np.random.Generator, size=(2.8, 1.8), depth: float = 8.0,
                 speed: float = 0.5) -> dict:
    """Box-face placement and motion for :func:`make_pair` (about 10% of the view)."""
    return {
        "center": (rng.uniform(-2.0, 2.0), rng.uniform(-0.5, 0.3), depth),
        "size": size,
        "motion": (speed * rng.choice([-1.0, 1.0]), 0.0, 0.1),
    }


@dataclass
class SyntheticPair:
    frame_t: Image
    frame_t1: Image
    depth_t: ScalarMap
    pose: Pose
    k: Intrinsics
    flow_forward: FlowField  # on the frame-t grid, t -> t+1
    flow_backward: FlowField  # on the frame-t+1 grid, pointing into frame t
    depth_t1: ScalarMap
    instances_t: np.ndarray
    instances_t1: np.ndarray
    object_mask_t: np.ndarray  # pixels showing a moving object in frame t
    corrupted_t: np.ndarray  # frame-t pixels whose photometric correspondence is wrong
    extras: dict = field(default_factory=dict)


def make_pair(
    rng: np.random.Generator,
    pose: Pose | None = None,
    cfg: SceneConfig | None = None,
    mover: dict | None = None,
) -> SyntheticPair:
    """Render a frame pair related by ``pose`` (frame t -> frame t+1).

    ``mover`` adds an independently translating box face:
    ``{"center": (x, y, z), "size": (w, h), "motion": (dx, dy, dz)}``.
    """
    cfg = cfg or SceneConfig()
    pose = pose if pose is not None else random_pose(rng)
    k = cfg.intrinsics
    static = room(rng, cfg)
    movers_t: list[Surface] = []
    motion = np.zeros(3)
    if mover is not None:
        movers_t = [box_face(rng, mover["center"], *mover["size"])]
        motion = np.asarray(mover.get("motion", (0.0, 0.0, 0.0)), float)
    movers_t1 = [s.moved(motion) for s in movers_t]

    ident = np.eye(4)
    cam1 = np.eye(4)
    cam1[:3, :3] = pose.rotation
    cam1[:3, 3] = pose.translation
    r0 = render(static + movers_t, ident, cfg)
    r1 = render(static + movers_t1, cam1, cfg)
    on_obj_t = r0.instance > 0
    on_obj_t1 = r1.instance > 0

    # forward flow: frame-t points, movers displaced, seen from camera t+1
    pts = r0.points + np.where(on_obj_t[..., None], motion, 0.0)
    pts_cam1 = pts @ pose.rotation.T + pose.translation
    grid = np.stack(np.meshgrid(np.arange(cfg.width, dtype=float),
                                np.arange(cfg.height, dtype=float)), axis=-1)
    fwd = _project(pts_cam1, k) - grid

    # backward flow: frame-(t+1) points, movers undone, seen from camera t
    back = r1.points - np.where(on_obj_t1[..., None], motion, 0.0)
    bwd = _project(back, k) - grid

    # photometric correspondences broken by movers: object pixels, and pixels that
    # land on (or within a pixel of) a mover in frame t+1
    target = grid + _rigid_only(r0.points, pose, k, grid)
    obj1 = on_obj_t1.copy()
    obj1[1:, :] |= on_obj_t1[:-1, :]
    obj1[:-1, :] |= on_obj_t1[1:, :]
    obj1[:, 1:] |= on_obj_t1[:, :-1]
    obj1[:, :-1] |= on_obj_t1[:, 1:]
    iu = np.clip(np.round(target[..., 0]).astype(int), 0, cfg.width - 1)
    iv = np.clip(np.round(target[..., 1]).astype(int), 0, cfg.height - 1)
    corrupted = on_obj_t | obj1[iv, iu]

    return SyntheticPair(
        frame_t=Image(r0.image),
        frame_t1=Image(r1.image),
        depth_t=ScalarMap(r0.depth, "meters", r0.depth > 0),
        pose=pose,
        k=k,
        flow_forward=FlowField(fwd),
        flow_backward=FlowField(bwd),
        depth_t1=ScalarMap(r1.depth, "meters", r1.depth > 0),
        instances_t=r0.instance,
        instances_t1=r1.instance,
        object_mask_t=on_obj_t,
        corrupted_t=corrupted,
        extras={"render_t": r0, "render_t1": r1, "motion": motion},
    )


def _rigid_only(points_world, pose: Pose, k: Intrinsics, grid) -> np.ndarray:
    cam1 = points_world @ pose.rotation.T + pose.translation
    return _project(cam1, k) - grid


def twist_error(estimate: Pose, truth: Pose) -> float:
    """Norm of the twist taking ``truth`` to ``estimate``."""
    return float(np.linalg.norm(se3_log(compose(estimate, inverse(truth)))))
