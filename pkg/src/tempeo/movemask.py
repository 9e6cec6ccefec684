"""Ground-truth moving masks from synthetic optical flow, depth, pose and instances.

A pixel moves when the observed flow disagrees with the flow that camera motion
alone would produce over a static scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeError
from .geometry import Intrinsics, Pose
from .imagery import FlowField, Image, ScalarMap, check_same_shape
from .warp import flow_warp, rigid_flow


@dataclass(frozen=True)
class MaskConfig:
    threshold_px: float = 1.0
    instance_fraction: float = 0.5

    def __post_init__(self):
        if not self.threshold_px > 0:
            raise ValueError(f"threshold_px must be positive, got {self.threshold_px}")
        if not 0 < self.instance_fraction <= 1:
            raise ValueError(f"instance_fraction must be in (0, 1], got {self.instance_fraction}")


def residual_flow(gt_flow: FlowField, depth: ScalarMap, pose: Pose, k: Intrinsics) -> ScalarMap:
    """Magnitude of ``gt_flow`` minus the camera-induced rigid flow, in pixels."""
    check_same_shape(gt_flow, depth)
    flow, valid = rigid_flow(depth, pose, k)
    diff = gt_flow.data - flow.data
    mag = np.hypot(diff[..., 0], diff[..., 1])
    return ScalarMap(np.where(valid.valid, mag, 0.0), "pixels", valid.valid)


def make_moving_mask(
    residual: ScalarMap,
    instances: np.ndarray | None = None,
    threshold_px: float = 1.0,
    instance_fraction: float = 0.5,
) -> ScalarMap:
    """Binary moving mask (1 = moving, 0 = static).

    Without ``instances`` this is per-pixel thresholding of the residual. With an
    instance map (0 = background), each instance is moving iff more than
    ``instance_fraction`` of its valid pixels exceed the threshold, and all its
    pixels take that label; background is static.
    """
    cfg = MaskConfig(threshold_px, instance_fraction)
    residual.require_units("pixels", "residual flow")
    over = residual.valid & (residual.data > cfg.threshold_px)
    if instances is None:
        return ScalarMap(over.astype(float), "probability", residual.valid)

    ids = np.asarray(instances)
    if ids.shape != residual.shape:
        raise SizeError(f"instance map {ids.shape} does not match residual {residual.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        if np.any(ids != np.round(ids)):
            raise ValueError("instance ids must be integers")
        ids = ids.astype(np.int64)
    if ids.size and ids.min() < 0:
        raise ValueError("instance ids must be non-negative")

    flat = ids.ravel()
    n_ids = int(flat.max()) + 1 if flat.size else 1
    valid_count = np.bincount(flat, weights=residual.valid.ravel(), minlength=n_ids)
    over_count = np.bincount(flat, weights=over.ravel(), minlength=n_ids)
    moving_id = over_count > cfg.instance_fraction * valid_count
    moving_id &= valid_count > 0
    moving_id[0] = False
    moving = moving_id[ids]
    out_valid = residual.valid | (ids > 0)
    return ScalarMap(moving.astype(float), "probability", out_valid)


def static_weight(moving_mask: ScalarMap) -> ScalarMap:
    """Convert moving labels into the static-region weights consumed by the losses."""
    return ScalarMap(np.clip(1.0 - moving_mask.data, 0.0, 1.0), "probability", moving_mask.valid)


def moving_fraction(mask: ScalarMap) -> float:
    return float((mask.data > 0.5).mean())


def pair_static_weight(mask_t: ScalarMap, mask_t1: ScalarMap, depth_t: ScalarMap, pose: Pose,
                       k: Intrinsics) -> ScalarMap:
    """Frame-t weights that also drop pixels whose warp touches a moving pixel in t+1.

    A frame-t pixel keeps weight ``1 - m_t`` only if every frame-(t+1) pixel it
    interpolates from is static; otherwise (or if the warp leaves the image) it
    gets 0.
    """
    check_same_shape(mask_t, mask_t1, depth_t)
    flow, fvalid = rigid_flow(depth_t, pose, k)
    static1 = (mask_t1.valid & (mask_t1.data < 0.5)).astype(float)
    covered, inb = flow_warp(Image(static1), flow)
    keep = fvalid.valid & inb.valid & (covered.data >= 1 - 1e-12)
    w = static_weight(mask_t)
    return ScalarMap(np.where(keep, w.data, 0.0), "probability", w.valid)
