"""Rigid flow from depth and ego-motion, and the two backward warps built on it.

Both warps sample the *other* frame: the output at pixel ``p`` of frame t is
frame t+1 read at ``p + flow(p)``. Out-of-bounds samples are reported through
the validity map rather than being zero-filled into downstream reductions.
"""

from __future__ import annotations

import numpy as np

from .errors import SizeError
from .geometry import Intrinsics, Pose, Z_MIN, pixel_grid
from .imagery import FlowField, Image, ScalarMap, check_same_shape, sample_bilinear


def transformed_points(depth: ScalarMap, pose: Pose, k: Intrinsics):
    """Frame-t pixels lifted with ``depth`` and moved into frame t+1.

    Returns ``(points (H, W, 3), valid (H, W))``; invalid depth lifts with depth 1
    so the arrays stay finite.
    """
    depth.require_units("meters", "depth")
    grid = pixel_grid(*depth.shape)
    ok = depth.valid & (depth.data > 0)
    d = np.where(ok, depth.data, 1.0)
    x = (grid[..., 0] - k.cx) / k.fx * d
    y = (grid[..., 1] - k.cy) / k.fy * d
    pts = np.stack([x, y, d], axis=-1)
    return pose.apply(pts), ok


def rigid_flow(depth: ScalarMap, pose: Pose, k: Intrinsics) -> tuple[FlowField, ScalarMap]:
    """Per-pixel displacement induced by camera motion ``pose`` over a static scene.

    Flow is zero wherever the returned validity is false (invalid depth, or the
    moved point lands at ``z <= Z_MIN``).
    """
    pts, ok = transformed_points(depth, pose, k)
    z = pts[..., 2]
    ok = ok & (z > Z_MIN)
    zs = np.where(ok, z, 1.0)
    grid = pixel_grid(*depth.shape)
    du = k.fx * pts[..., 0] / zs + k.cx - grid[..., 0]
    dv = k.fy * pts[..., 1] / zs + k.cy - grid[..., 1]
    flow = np.where(ok[..., None], np.stack([du, dv], axis=-1), 0.0)
    return FlowField(flow), ScalarMap(ok.astype(float), "probability", ok)


def flow_warp(img: Image, flow: FlowField) -> tuple[Image, ScalarMap]:
    """Sample ``img`` at ``p + flow(p)`` for every pixel ``p``."""
    if tuple(img.shape) != tuple(flow.shape):
        raise SizeError(f"image {img.shape} and flow {flow.shape} differ in size")
    grid = pixel_grid(*img.shape)
    at = grid + flow.data
    out, inb = sample_bilinear(img, at[..., 0], at[..., 1])
    return Image(out), ScalarMap(inb.astype(float), "probability", inb)


def inverse_warp(
    target: Image, depth_src: ScalarMap, pose: Pose, k: Intrinsics
) -> tuple[Image, ScalarMap]:
    """Synthesize the source view by sampling ``target`` through depth and pose.

    ``depth_src`` is the source-frame (frame t) depth; ``pose`` maps frame t to
    the target frame. Output values equal ``flow_warp(target, rigid_flow(...))``
    exactly; validity additionally requires a valid rigid flow.
    """
    check_same_shape(target, depth_src)
    flow, fvalid = rigid_flow(depth_src, pose, k)
    out, svalid = flow_warp(target, flow)
    valid = fvalid.valid & svalid.valid
    return out, ScalarMap(valid.astype(float), "probability", valid)
