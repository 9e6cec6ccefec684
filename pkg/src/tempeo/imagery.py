"""Raster containers, bilinear sampling, image gradients and pyramids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SizeError, UnitsError

UNITS = ("meters", "normalized", "probability", "pixels", "intensity")
LUMA = np.array([0.299, 0.587, 0.114])
BOUNDS_EPS = 1e-9  # pixels; absorbs round-off when a warp lands exactly on the border


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Image:
    """Intensity raster of shape ``(H, W)`` (gray) or ``(H, W, 3)``, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.ndim == 3 and d.shape[2] == 1:
            d = d[..., 0]
        if d.ndim not in (2, 3) or (d.ndim == 3 and d.shape[2] != 3):
            raise SizeError(f"image must be (H, W) or (H, W, 3), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    def gray(self) -> "Image":
        return self if self.channels == 1 else Image(to_gray(self.data))


@dataclass(frozen=True, eq=False)
class ScalarMap:
    """Single-channel raster with a units tag and per-pixel validity.

    Invalid pixels never take part in reductions.
    """

    data: np.ndarray
    units: str
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.ndim != 2:
            raise SizeError(f"scalar map must be 2-D, got {d.shape}")
        if self.units not in UNITS:
            raise UnitsError(f"unknown units {self.units!r}; expected one of {UNITS}")
        valid = np.ones(d.shape, bool) if self.valid is None else np.array(self.valid, dtype=bool)
        if valid.shape != d.shape:
            raise SizeError(f"validity {valid.shape} does not match data {d.shape}")
        valid &= np.isfinite(d)
        d = np.where(np.isfinite(d), d, 0.0)
        object.__setattr__(self, "data", _frozen(d))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def require_units(self, units: str, what: str = "map") -> None:
        if self.units != units:
            raise UnitsError(f"{what} must be in {units}, got {self.units}")


@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense ``(H, W, 2)`` pixel displacements ``(du, dv)``."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.ndim != 3 or d.shape[2] != 2:
            raise SizeError(f"flow must be (H, W, 2), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("flow contains non-finite values")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


def check_same_shape(*rasters) -> tuple[int, int]:
    shapes = {tuple(r.shape[:2]) for r in rasters}
    if len(shapes) != 1:
        raise SizeError(f"raster dimensions disagree: {sorted(shapes)}")
    return shapes.pop()


def to_gray(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        return data
    return data @ LUMA


def _raw(img) -> np.ndarray:
    return img.data if isinstance(img, (Image, ScalarMap)) else np.asarray(img, dtype=float)


def _in_bounds(u, v, h, w):
    e = BOUNDS_EPS
    return (u >= -e) & (u <= w - 1 + e) & (v >= -e) & (v <= h - 1 + e)


def sample_bilinear(img, u, v, with_grad: bool = False):
    """Bilinearly sample ``img`` at continuous coordinates ``(u, v)``.

    Returns ``(values, in_bounds)``, or ``(values, in_bounds, d_du, d_dv)`` with
    ``with_grad``. A location is in bounds iff it lies inside the hull of pixel
    centers, ``0 <= u <= W-1`` and ``0 <= v <= H-1`` (up to ``BOUNDS_EPS``,
    with such points clamped onto the border); out-of-bounds values and
    derivatives are 0. Derivatives are those of the interpolant itself
    (right-sided on grid lines).
    """
    data = _raw(img)
    h, w = data.shape[:2]
    if h < 2 or w < 2:
        raise SizeError(f"bilinear sampling needs at least 2x2 pixels, got {w}x{h}")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    inb = _in_bounds(u, v, h, w)
    uc = np.where(inb, np.clip(u, 0, w - 1), 0.0)
    vc = np.where(inb, np.clip(v, 0, h - 1), 0.0)
    x0 = np.minimum(np.floor(uc).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(vc).astype(np.intp), h - 2)
    a = uc - x0
    b = vc - y0
    if data.ndim == 3:
        a = a[..., None]
        b = b[..., None]
        mask = inb[..., None]
    else:
        mask = inb
    i00 = data[y0, x0]
    i10 = data[y0, x0 + 1]
    i01 = data[y0 + 1, x0]
    i11 = data[y0 + 1, x0 + 1]
    val = (1 - a) * (1 - b) * i00 + a * (1 - b) * i10 + (1 - a) * b * i01 + a * b * i11
    val = np.where(mask, val, 0.0)
    if not with_grad:
        return val, inb
    du = (1 - b) * (i10 - i00) + b * (i11 - i01)
    dv = (1 - a) * (i01 - i00) + a * (i11 - i10)
    return val, inb, np.where(mask, du, 0.0), np.where(mask, dv, 0.0)


def bilinear_adjoint(weights, u, v, shape) -> np.ndarray:
    """Transpose of :func:`sample_bilinear` with respect to the sampled image.

    Scatters per-sample ``weights`` (same leading shape as ``u``) back onto a
    ``shape`` raster with the bilinear coefficients. Out-of-bounds samples
    contribute nothing.
    """
    h, w = shape[:2]
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    weights = np.asarray(weights, dtype=float)
    inb = _in_bounds(u, v, h, w)
    uc, vc, wt = np.clip(u[inb], 0, w - 1), np.clip(v[inb], 0, h - 1), weights[inb]
    x0 = np.minimum(np.floor(uc).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(vc).astype(np.intp), h - 2)
    a = uc - x0
    b = vc - y0
    if wt.ndim == 2:
        a = a[:, None]
        b = b[:, None]
    out = np.zeros(shape, dtype=float)
    np.add.at(out, (y0, x0), (1 - a) * (1 - b) * wt)
    np.add.at(out, (y0, x0 + 1), a * (1 - b) * wt)
    np.add.at(out, (y0 + 1, x0), (1 - a) * b * wt)
    np.add.at(out, (y0 + 1, x0 + 1), a * b * wt)
    return out


def gradient(img) -> tuple[ScalarMap, ScalarMap]:
    """Image gradients ``(d/du, d/dv)`` of the grayscale image.

    Central differences in the interior, one-sided differences on the border.
    """
    data = to_gray(_raw(img))
    h, w = data.shape
    if h < 3 or w < 3:
        raise SizeError(f"gradient needs at least 3x3 pixels, got {w}x{h}")
    gv, gu = np.gradient(data)
    return ScalarMap(gu, "intensity"), ScalarMap(gv, "intensity")


def _box2(data: np.ndarray) -> np.ndarray:
    h, w = data.shape[:2]
    d = data[: h - h % 2, : w - w % 2]
    return 0.25 * (d[0::2, 0::2] + d[1::2, 0::2] + d[0::2, 1::2] + d[1::2, 1::2])


def downsample(img: Image) -> Image:
    """2x box downsample; an odd trailing row/column is dropped."""
    return Image(_box2(img.data))


def downsample_map(m: ScalarMap) -> ScalarMap:
    """2x downsample averaging only valid pixels; a block with none stays invalid."""
    valid = m.valid.astype(float)
    count = _box2(valid) * 4
    total = _box2(np.where(m.valid, m.data, 0.0)) * 4
    out_valid = count > 0
    data = np.where(out_valid, total / np.maximum(count, 1), 0.0)
    return ScalarMap(data, m.units, out_valid)


def pyramid(img: Image, levels: int, min_size: int = 8) -> list[Image]:
    """Coarse-to-fine image pyramid; element 0 is the input itself."""
    if levels < 1:
        raise SizeError(f"levels must be >= 1, got {levels}")
    h, w = img.shape
    smallest = (h >> (levels - 1), w >> (levels - 1))
    if min(smallest) < min_size:
        raise SizeError(
            f"{levels} levels on a {w}x{h} image gives a {smallest[1]}x{smallest[0]} "
            f"top level, below the {min_size}x{min_size} minimum"
        )
    out = [img]
    for _ in range(levels - 1):
        out.append(downsample(out[-1]))
    return out
