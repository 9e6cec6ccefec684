"""On-disk formats: depth PNGs, Middlebury .flo, calibration and pose records.

Readers reject malformed input with :class:`FormatError` naming the path and
what was found; they never coerce silently.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError
from .geometry import Intrinsics, Pose, orthonormality_error, orthonormalize
from .imagery import FlowField, Image, ScalarMap, sample_bilinear

FLO_MAGIC = 202021.25
KITTI_DEPTH_SCALE = 256.0
VKITTI_DEPTH_SCALE = 100.0
VKITTI_SATURATED = 65535
DEPTH_NORM_MAX = 80.0
POSE_ORTHO_TOL = 1e-3
TRAIN_SIZE = (192, 640)  # (height, width)


def _open_png(path) -> np.ndarray:
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.array(im)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return arr, mode


def _read_uint16_png(path) -> np.ndarray:
    arr, mode = _open_png(path)
    if arr.ndim != 2 or arr.dtype not in (np.uint16, np.int32):
        raise FormatError(
            f"{path}: expected a 16-bit single-channel PNG, found mode {mode} "
            f"with shape {arr.shape} and dtype {arr.dtype}"
        )
    if mode not in ("I;16", "I;16B", "I;16L", "I"):
        raise FormatError(f"{path}: expected 16-bit grayscale, found mode {mode}")
    if arr.size and (arr.min() < 0 or arr.max() > 65535):
        raise FormatError(f"{path}: values outside the 16-bit range")
    return arr.astype(np.uint16)


def _write_uint16_png(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype=np.uint16)
    PILImage.fromarray(values).save(Path(path), format="PNG")


# -- depth maps ------------------------------------------------------------------


def read_depth_png_kitti(path) -> ScalarMap:
    """KITTI depth PNG: 16-bit, meters = value / 256, 0 = no measurement."""
    raw = _read_uint16_png(path)
    return ScalarMap(raw / KITTI_DEPTH_SCALE, "meters", raw > 0)


def write_depth_png_kitti(path, depth: ScalarMap) -> None:
    depth.require_units("meters", "depth")
    q = np.clip(np.round(depth.data * KITTI_DEPTH_SCALE), 1, 65535)
    _write_uint16_png(path, np.where(depth.valid & (depth.data > 0), q, 0))


def read_depth_png_vkitti(path) -> ScalarMap:
    """Virtual KITTI depth PNG: 16-bit centimeters.

    The saturation value 65535 (655.35 m, sky and beyond range) is returned
    invalid with its nominal depth kept in ``data``; see :func:`vkitti_saturated`.
    """
    raw = _read_uint16_png(path)
    return ScalarMap(raw / VKITTI_DEPTH_SCALE, "meters", (raw > 0) & (raw < VKITTI_SATURATED))


def vkitti_saturated(depth: ScalarMap) -> np.ndarray:
    return ~depth.valid & (depth.data >= VKITTI_SATURATED / VKITTI_DEPTH_SCALE)


def write_depth_png_vkitti(path, depth: ScalarMap) -> None:
    depth.require_units("meters", "depth")
    q = np.clip(np.round(depth.data * VKITTI_DEPTH_SCALE), 1, VKITTI_SATURATED - 1)
    ok = depth.valid & (depth.data > 0)
    sat = ~depth.valid & (depth.data >= VKITTI_SATURATED / VKITTI_DEPTH_SCALE)
    _write_uint16_png(path, np.where(ok, q, np.where(sat, VKITTI_SATURATED, 0)))


def read_depth_npy(path) -> ScalarMap:
    """Float depth in meters stored as ``.npy``; non-positive or non-finite = invalid."""
    try:
        arr = np.load(Path(path), allow_pickle=False)
    except ValueError as exc:
        raise FormatError(f"{path}: not a valid .npy array ({exc})") from exc
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a 2-D depth array, found shape {arr.shape}")
    return ScalarMap(arr, "meters", np.isfinite(arr) & (arr > 0))


def read_depth(path, fmt: str | None = None) -> ScalarMap:
    """Dispatch on ``fmt`` ("kitti", "vkitti", "npy"); ``.npy`` files are auto-detected."""
    path = Path(path)
    if fmt is None:
        fmt = "npy" if path.suffix == ".npy" else "kitti"
    readers = {"kitti": read_depth_png_kitti, "vkitti": read_depth_png_vkitti, "npy": read_depth_npy}
    if fmt not in readers:
        raise ValueError(f"unknown depth format {fmt!r}")
    return readers[fmt](path)


def normalize_depth(depth: ScalarMap) -> ScalarMap:
    """Meters in [0, 80] to [-1, 1]; anything beyond 80 m maps to 1."""
    depth.require_units("meters", "depth")
    n = np.minimum(depth.data / (DEPTH_NORM_MAX / 2) - 1.0, 1.0)
    return ScalarMap(n, "normalized", depth.valid)


def denormalize_depth(norm: ScalarMap) -> ScalarMap:
    norm.require_units("normalized", "depth")
    return ScalarMap((DEPTH_NORM_MAX / 2) * (norm.data + 1.0), "meters", norm.valid)


# -- optical flow ----------------------------------------------------------------


def read_flow_flo(path) -> FlowField:
    """Middlebury ``.flo``: float32 magic, int32 width, int32 height, then u,v pairs."""
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 12:
        raise FormatError(f"{path}: truncated header, expected 12 bytes, found {len(buf)}")
    magic, width, height = struct.unpack("<fii", buf[:12])
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(buf) != expected:
        raise FormatError(
            f"{path}: payload size mismatch for {width}x{height}, "
            f"expected {expected} bytes, found {len(buf)}"
        )
    data = np.frombuffer(buf, dtype="<f4", offset=12).reshape(height, width, 2)
    return FlowField(data.astype(float))


def write_flow_flo(path, flow: FlowField) -> None:
    header = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    Path(path).write_bytes(header + flow.data.astype("<f4").tobytes())


# -- images, masks, instance maps ---------------------------------------------------


def read_image(path) -> Image:
    """8- or 16-bit gray/RGB(A) PNG/JPEG scaled to [0, 1]; alpha is dropped."""
    arr, mode = _open_png(path)
    if mode in ("RGBA", "LA"):
        arr = arr[..., :-1]
    if arr.dtype == np.uint8 or mode in ("L", "RGB", "P"):
        scale = 255.0
    elif mode.startswith("I;16") or arr.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported image mode {mode}")
    return Image(arr.astype(float) / scale)


def write_image(path, img: Image) -> None:
    data = np.clip(np.round(img.data * 255), 0, 255).astype(np.uint8)
    PILImage.fromarray(data).save(Path(path), format="PNG")


def read_probability(path) -> ScalarMap:
    """Probability map from ``.npy`` floats or an 8-bit PNG (255 = 1.0)."""
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.asarray(np.load(path, allow_pickle=False), dtype=float)
        if arr.ndim != 2:
            raise FormatError(f"{path}: expected a 2-D array, found shape {arr.shape}")
        return ScalarMap(arr, "probability", np.isfinite(arr))
    arr, mode = _open_png(path)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise FormatError(f"{path}: expected an 8-bit single-channel PNG, found mode {mode}")
    return ScalarMap(arr / 255.0, "probability")


def write_mask_png(path, mask: ScalarMap) -> None:
    """Binary mask as 8-bit PNG: 255 where the mask is set (> 0.5), else 0."""
    PILImage.fromarray(np.where(mask.data > 0.5, 255, 0).astype(np.uint8)).save(
        Path(path), format="PNG"
    )


def read_mask_png(path) -> ScalarMap:
    arr, mode = _open_png(path)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise FormatError(f"{path}: expected an 8-bit single-channel mask, found mode {mode}")
    return ScalarMap((arr > 127).astype(float), "probability")


def read_instances(path) -> np.ndarray:
    """Integer instance ids (0 = background) from a gray PNG or ``.npy``."""
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path, allow_pickle=False)
    else:
        arr, mode = _open_png(path)
        if arr.ndim != 2:
            raise FormatError(f"{path}: expected a single-channel instance map, found mode {mode}")
    if not np.issubdtype(arr.dtype, np.integer) or arr.ndim != 2:
        raise FormatError(f"{path}: instance map must be a 2-D integer array")
    if arr.size and arr.min() < 0:
        raise FormatError(f"{path}: negative instance ids")
    return arr.astype(np.int64)


# -- calibration and poses -----------------------------------------------------------


def _parse_floats(tokens, path, lineno, key) -> np.ndarray:
    out = []
    for col, tok in enumerate(tokens, 1):
        try:
            out.append(float(tok))
        except ValueError:
            raise FormatError(
                f"{path}:{lineno}: malformed float {tok!r} in {key!r} (value {col})"
            ) from None
    return np.array(out)


def read_calib_entries(path) -> dict[str, tuple[int, str]]:
    """Raw ``key: values`` lines of a KITTI calibration file, keyed by name."""
    entries = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if ":" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key: values', got {line!r}")
        key, _, rest = line.partition(":")
        entries[key.strip()] = (lineno, rest)
    return entries


CALIB_KEYS = ("P2", "P_rect_02", "P0", "P_rect_00")


def read_calib(path, key: str | None = None) -> Intrinsics:
    """Intrinsics from a 3x4 projection matrix row in a KITTI calibration file.

    With ``key=None`` the first of ``CALIB_KEYS`` present is used.
    """
    entries = read_calib_entries(path)
    if key is None:
        key = next((k for k in CALIB_KEYS if k in entries), None)
        if key is None:
            raise FormatError(f"{path}: none of the projection keys {CALIB_KEYS} present")
    if key not in entries:
        raise FormatError(f"{path}: missing key {key!r}")
    lineno, rest = entries[key]
    vals = _parse_floats(rest.split(), path, lineno, key)
    if vals.size != 12:
        raise FormatError(f"{path}:{lineno}: {key!r} needs 12 values, found {vals.size}")
    p = vals.reshape(3, 4)
    try:
        return Intrinsics(p[0, 0], p[1, 1], p[0, 2], p[1, 2])
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: {exc}") from exc


def write_calib(path, k: Intrinsics, key: str = "P2") -> None:
    p = np.zeros((3, 4))
    p[:, :3] = k.matrix
    Path(path).write_text(f"{key}: " + " ".join(repr(float(x)) for x in p.ravel()) + "\n",
                          encoding="utf-8")


def read_pose_record(path) -> Pose:
    """Pose from 12 whitespace-separated floats, a row-major 3x4 ``[R|t]``.

    Rotations within 1e-3 of orthonormal are snapped back onto SO(3).
    """
    text = Path(path).read_text(encoding="utf-8")
    tokens = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith("#"):
            continue
        tokens += [(lineno, tok) for tok in line.split()]
    if len(tokens) != 12:
        raise FormatError(f"{path}: pose record needs 12 values, found {len(tokens)}")
    vals = []
    for i, (lineno, tok) in enumerate(tokens, 1):
        try:
            vals.append(float(tok))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: malformed float {tok!r} (value {i})") from None
    m = np.array(vals).reshape(3, 4)
    if not np.all(np.isfinite(m)):
        raise FormatError(f"{path}: non-finite pose entries")
    rot = m[:, :3]
    err = orthonormality_error(rot)
    if err > POSE_ORTHO_TOL or np.linalg.det(rot) <= 0:
        raise FormatError(f"{path}: rotation not orthonormal (error {err:.3g})")
    return Pose(orthonormalize(rot), m[:, 3])


def format_pose_record(pose: Pose) -> str:
    m = np.hstack([pose.rotation, pose.translation[:, None]])
    return " ".join(repr(float(x)) for x in m.ravel())


def write_pose_record(path, pose: Pose) -> None:
    Path(path).write_text(format_pose_record(pose) + "\n", encoding="utf-8")


# -- resizing -------------------------------------------------------------------------


def _source_coords(src_hw, dst_hw):
    sh, sw = src_hw
    dh, dw = dst_hw
    v, u = np.mgrid[0:dh, 0:dw].astype(float)
    us = np.clip((u + 0.5) * sw / dw - 0.5, 0, sw - 1)
    vs = np.clip((v + 0.5) * sh / dh - 0.5, 0, sh - 1)
    return us, vs


def resize_image(img: Image, size=TRAIN_SIZE) -> Image:
    """Bilinear resize to ``size`` = (height, width), pixel-area aligned."""
    us, vs = _source_coords(img.shape, size)
    out, _ = sample_bilinear(img, us, vs)
    return Image(out)


def resize_nearest(arr: np.ndarray, size=TRAIN_SIZE) -> np.ndarray:
    """Nearest-neighbour resize for masks and instance maps."""
    sh, sw = arr.shape[:2]
    us, vs = _source_coords((sh, sw), size)
    return arr[np.round(vs).astype(int), np.round(us).astype(int)]


def resize_depth(depth: ScalarMap, size=TRAIN_SIZE) -> ScalarMap:
    """Bilinear resize where any invalid contributing neighbour invalidates the output."""
    us, vs = _source_coords(depth.shape, size)
    vals, _ = sample_bilinear(np.where(depth.valid, depth.data, 0.0), us, vs)
    cover, _ = sample_bilinear(depth.valid.astype(float), us, vs)
    valid = cover >= 1 - 1e-12
    return ScalarMap(np.where(valid, vals, 0.0), depth.units, valid)


def resize_intrinsics(k: Intrinsics, src_hw, dst_hw=TRAIN_SIZE) -> Intrinsics:
    """Rescale fx, cx by the width ratio and fy, cy by the height ratio."""
    return k.scaled(dst_hw[1] / src_hw[1], dst_hw[0] / src_hw[0])
