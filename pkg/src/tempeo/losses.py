"""Training losses as pure reductions over rasters, with analytic input gradients.

Every loss is a mean over the valid support (and channels); an empty support
yields ``LossValue(0.0, 0)`` with ``empty`` set. Photometric losses convert
colour input to luma unless ``grayscale=False``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, SizeError
from .geometry import Intrinsics, Pose
from .imagery import (
    FlowField,
    Image,
    ScalarMap,
    bilinear_adjoint,
    check_same_shape,
    sample_bilinear,
    to_gray,
)
from .warp import flow_warp, rigid_flow, transformed_points

PROB_EPS = 1e-7
PROB_DOMAIN_TOL = 1e-6
SSIM_WINDOW = 7
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class LossValue:
    value: float
    valid_pixel_count: int

    @property
    def empty(self) -> bool:
        return self.valid_pixel_count == 0


def _reduce(per_pixel: np.ndarray, support: np.ndarray) -> LossValue:
    n = int(support.sum())
    if n == 0:
        return LossValue(0.0, 0)
    vals = per_pixel[support]
    return LossValue(float(vals.mean()), n)


def batch_mean(values: Iterable[LossValue]) -> LossValue:
    """Average per-sample losses, skipping empty ones."""
    values = [v for v in values if not v.empty]
    if not values:
        return LossValue(0.0, 0)
    return LossValue(
        float(np.mean([v.value for v in values])), sum(v.valid_pixel_count for v in values)
    )


def _pixels(img: Image, grayscale: bool) -> np.ndarray:
    return to_gray(img.data) if grayscale else img.data


def _channels(a: np.ndarray) -> int:
    return 1 if a.ndim == 2 else a.shape[2]


def _per_pixel(a: np.ndarray) -> np.ndarray:
    return a if a.ndim == 2 else a.mean(axis=2)


# -- synthetic depth regression ------------------------------------------------


def _depth_pair(pred: ScalarMap, gt: ScalarMap):
    check_same_shape(pred, gt)
    pred.require_units("normalized", "predicted depth")
    gt.require_units("normalized", "ground-truth depth")
    return pred.valid & gt.valid


def depth_l1(pred: ScalarMap, gt: ScalarMap) -> LossValue:
    """Mean absolute difference between normalized depth maps."""
    support = _depth_pair(pred, gt)
    return _reduce(np.abs(pred.data - gt.data), support)


def depth_l1_grad(pred: ScalarMap, gt: ScalarMap) -> np.ndarray:
    support = _depth_pair(pred, gt)
    n = max(int(support.sum()), 1)
    return np.where(support, np.sign(pred.data - gt.data) / n, 0.0)


# -- moving-object segmentation ------------------------------------------------

SEG_MODES = ("bce", "literal")


def _seg_inputs(pred_prob: ScalarMap, gt_mask: ScalarMap, mode: str):
    if mode not in SEG_MODES:
        raise ValueError(f"mode must be one of {SEG_MODES}, got {mode!r}")
    check_same_shape(pred_prob, gt_mask)
    pred_prob.require_units("probability", "predicted mask")
    gt_mask.require_units("probability", "ground-truth mask")
    support = pred_prob.valid & gt_mask.valid
    for name, m in (("prediction", pred_prob), ("ground truth", gt_mask)):
        vals = m.data[support]
        if vals.size and (vals.min() < -PROB_DOMAIN_TOL or vals.max() > 1 + PROB_DOMAIN_TOL):
            raise DomainError(
                f"{name} probabilities outside [0, 1]: range [{vals.min()}, {vals.max()}]"
            )
    p = np.clip(pred_prob.data, PROB_EPS, 1 - PROB_EPS)
    m = np.clip(gt_mask.data, 0.0, 1.0)
    return p, m, support


def moving_seg_loss(pred_prob: ScalarMap, gt_mask: ScalarMap, mode: str = "bce") -> LossValue:
    """Segmentation loss for the moving-object branch.

    ``mode="bce"`` is the full binary cross-entropy; ``mode="literal"`` keeps only
    the positive-class term ``-m log p``, which vanishes when the ground truth
    has no moving pixels.
    """
    p, m, support = _seg_inputs(pred_prob, gt_mask, mode)
    if mode == "bce":
        per = -(m * np.log(p) + (1 - m) * np.log1p(-p))
    else:
        per = -m * np.log(p)
    return _reduce(per, support)


def moving_seg_loss_grad(pred_prob: ScalarMap, gt_mask: ScalarMap, mode: str = "bce") -> np.ndarray:
    p, m, support = _seg_inputs(pred_prob, gt_mask, mode)
    n = max(int(support.sum()), 1)
    if mode == "bce":
        g = -(m / p - (1 - m) / (1 - p))
    else:
        g = -m / p
    inside = (pred_prob.data > PROB_EPS) & (pred_prob.data < 1 - PROB_EPS)
    return np.where(support & inside, g / n, 0.0)


# -- real-domain robust temporal consistency ------------------------------------


def _rtc_terms(frame_t, frame_t1, depth_t, pose, mask_t, mask_t1, k, grayscale):
    check_same_shape(frame_t, frame_t1, depth_t, mask_t, mask_t1)
    for m in (mask_t, mask_t1):
        m.require_units("probability", "static-weight mask")
    i0 = _pixels(frame_t, grayscale)
    i1 = _pixels(frame_t1, grayscale)
    m0 = np.where(mask_t.valid, mask_t.data, 0.0)
    m1 = np.where(mask_t1.valid, mask_t1.data, 0.0)
    if i1.ndim == 3:
        m0c, m1c = m0[..., None], m1[..., None]
    else:
        m0c, m1c = m0, m1

    flow, fvalid = rigid_flow(depth_t, pose, k)
    weighted = Image(m1c * i1)
    warped, svalid = flow_warp(weighted, flow)
    # a pixel keeps support only if every neighbour it interpolates from is unmasked
    covered, _ = flow_warp(Image((m1 > 0).astype(float)), flow)
    support = fvalid.valid & svalid.valid & (m0 > 0) & (covered.data >= 1 - 1e-12)
    residual = warped.data - m0c * i0
    return residual, support, flow, weighted, m0c


def robust_temporal_loss(
    frame_t: Image,
    frame_t1: Image,
    depth_t: ScalarMap,
    pose: Pose,
    mask_t: ScalarMap,
    mask_t1: ScalarMap,
    k: Intrinsics,
    grayscale: bool = True,
) -> LossValue:
    """Masked photometric reconstruction error between frame t and warped frame t+1.

    Masks are static-region weights (1 = static, 0 = moving) multiplied into
    each frame before comparison; frame t+1 is warped into frame t with
    ``depth_t`` and ``pose``. The squared residual is averaged over pixels where
    the warp is valid and neither mask zeroes the comparison.
    """
    residual, support, *_ = _rtc_terms(
        frame_t, frame_t1, depth_t, pose, mask_t, mask_t1, k, grayscale
    )
    return _reduce(_per_pixel(residual**2), support)


def photometric_loss(
    frame_t: Image, frame_t1: Image, depth_t: ScalarMap, pose: Pose, k: Intrinsics,
    grayscale: bool = True,
) -> LossValue:
    """Unmasked squared photometric loss (all-static masks)."""
    ones = ScalarMap(np.ones(frame_t.shape), "probability")
    return robust_temporal_loss(frame_t, frame_t1, depth_t, pose, ones, ones, k, grayscale)


def robust_temporal_loss_grad(
    frame_t: Image,
    frame_t1: Image,
    depth_t: ScalarMap,
    pose: Pose,
    mask_t: ScalarMap,
    mask_t1: ScalarMap,
    k: Intrinsics,
    grayscale: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`robust_temporal_loss` w.r.t. ``depth_t`` and ``frame_t``.

    The frame gradient is with respect to the (luma, if ``grayscale``) pixel
    values actually compared. Support changes are ignored (piecewise gradient).
    """
    residual, support, flow, weighted, m0c = _rtc_terms(
        frame_t, frame_t1, depth_t, pose, mask_t, mask_t1, k, grayscale
    )
    n = max(int(support.sum()), 1)
    c = _channels(residual)
    scale = 2.0 / (n * c)
    r = np.where(support[..., None] if residual.ndim == 3 else support, residual, 0.0)

    d_frame = -scale * r * m0c

    pts, _ = transformed_points(depth_t, pose, k)
    grid = np.indices(depth_t.shape, dtype=float)
    ray = np.stack(
        [(grid[1] - k.cx) / k.fx, (grid[0] - k.cy) / k.fy, np.ones(depth_t.shape)], axis=-1
    )
    dpts = ray @ pose.rotation.T
    x, y, z = pts[..., 0], pts[..., 1], np.where(support, pts[..., 2], 1.0)
    du_dd = k.fx * (dpts[..., 0] * z - x * dpts[..., 2]) / z**2
    dv_dd = k.fy * (dpts[..., 1] * z - y * dpts[..., 2]) / z**2

    at = np.indices(depth_t.shape, dtype=float)[::-1].transpose(1, 2, 0) + flow.data
    _, _, gu, gv = sample_bilinear(weighted, at[..., 0], at[..., 1], with_grad=True)
    if residual.ndim == 3:
        dr_dd = gu * du_dd[..., None] + gv * dv_dd[..., None]
        d_depth = scale * (r * dr_dd).sum(axis=2)
    else:
        d_depth = scale * r * (gu * du_dd + gv * dv_dd)
    return np.where(support, d_depth, 0.0), d_frame


# -- synthetic flow-guided temporal consistency --------------------------------


def _stc_terms(translated_t, translated_t1, gt_flow, grayscale):
    check_same_shape(translated_t, translated_t1, gt_flow)
    a = Image(_pixels(translated_t, grayscale))
    b = _pixels(translated_t1, grayscale)
    warped, valid = flow_warp(a, gt_flow)
    return warped.data - b, valid.valid, a


def synthetic_temporal_loss(
    translated_t: Image, translated_t1: Image, gt_flow: FlowField, grayscale: bool = True
) -> LossValue:
    """Flow-guided L1 consistency between two translated synthetic frames.

    ``gt_flow`` is defined on the frame-(t+1) grid and points at the matching
    frame-t location (the backward flow), so ``flow_warp(translated_t, gt_flow)``
    is aligned with ``translated_t1``.
    """
    residual, support, _ = _stc_terms(translated_t, translated_t1, gt_flow, grayscale)
    return _reduce(_per_pixel(np.abs(residual)), support)


def synthetic_temporal_loss_grad(
    translated_t: Image, translated_t1: Image, gt_flow: FlowField, grayscale: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. ``translated_t`` and ``translated_t1`` (compared pixel values)."""
    residual, support, a = _stc_terms(translated_t, translated_t1, gt_flow, grayscale)
    n = max(int(support.sum()), 1)
    s = np.sign(residual) / (n * _channels(residual))
    s = np.where(support[..., None] if s.ndim == 3 else support, s, 0.0)
    at = np.indices(a.shape, dtype=float)[::-1].transpose(1, 2, 0) + gt_flow.data
    d_t = bilinear_adjoint(s, at[..., 0], at[..., 1], a.data.shape)
    return d_t, -s


# -- SSIM ----------------------------------------------------------------------


def _box_mean(x: np.ndarray) -> np.ndarray:
    return sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW), axis=(0, 1)).mean(axis=(-2, -1))


def _box_adjoint(g: np.ndarray) -> np.ndarray:
    """Transpose of the valid-mode box mean."""
    p = SSIM_WINDOW - 1
    pad = [(p, p), (p, p)] + [(0, 0)] * (g.ndim - 2)
    return _box_mean(np.pad(g, pad))


def _ssim_stats(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise SizeError(f"SSIM inputs differ in shape: {a.shape} vs {b.shape}")
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise SizeError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[:2]}")
    mu_a, mu_b = _box_mean(a), _box_mean(b)
    e_aa, e_bb, e_ab = _box_mean(a * a), _box_mean(b * b), _box_mean(a * b)
    var_a = e_aa - mu_a**2
    var_b = e_bb - mu_b**2
    cov = e_ab - mu_a * mu_b
    n1 = 2 * mu_a * mu_b + SSIM_C1
    n2 = 2 * cov + SSIM_C2
    d1 = mu_a**2 + mu_b**2 + SSIM_C1
    d2 = var_a + var_b + SSIM_C2
    s = n1 * n2 / (d1 * d2)
    return s, (mu_a, mu_b, n1, n2, d1, d2)


def ssim(a: Image, b: Image, grayscale: bool = True) -> ScalarMap:
    """Per-pixel SSIM over a 7x7 uniform window.

    Only pixels whose whole window lies inside the image are valid; colour
    input without ``grayscale`` averages the per-channel SSIM.
    """
    check_same_shape(a, b)
    s, _ = _ssim_stats(_pixels(a, grayscale), _pixels(b, grayscale))
    s = _per_pixel(s)
    r = SSIM_WINDOW // 2
    h, w = a.shape
    data = np.zeros((h, w))
    valid = np.zeros((h, w), bool)
    data[r : h - r, r : w - r] = s
    valid[r : h - r, r : w - r] = True
    return ScalarMap(data, "normalized", valid)


def ssim_loss(a: Image, b: Image, grayscale: bool = True) -> LossValue:
    m = ssim(a, b, grayscale)
    return _reduce((1.0 - m.data) / 2.0, m.valid)


def ssim_loss_grad(a: Image, b: Image, grayscale: bool = True) -> np.ndarray:
    """Gradient of :func:`ssim_loss` w.r.t. the pixels of ``a``."""
    check_same_shape(a, b)
    pa, pb = _pixels(a, grayscale), _pixels(b, grayscale)
    s, (mu_a, mu_b, n1, n2, d1, d2) = _ssim_stats(pa, pb)
    count = s.size
    ds_dmu = s * (2 * mu_b / n1 - 2 * mu_b / n2 - 2 * mu_a / d1 + 2 * mu_a / d2)
    ds_daa = -s / d2
    ds_dab = 2 * s / n2
    g = -0.5 / count
    return g * (_box_adjoint(ds_dmu) + 2 * pa * _box_adjoint(ds_daa) + pb * _box_adjoint(ds_dab))
