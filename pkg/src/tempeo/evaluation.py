"""Monocular depth evaluation: the seven standard error/accuracy metrics,
region-split reports, and manifest-driven split evaluation.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import read_depth, read_mask_png
from .errors import DomainError, FormatError, NoSupportError, SizeError, TempeoError
from .imagery import ScalarMap

log = logging.getLogger(__name__)

CAP_MIN = 1e-3
METRICS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")
# fractional (row_start, row_end, col_start, col_end)
CROPS = {
    "garg": (0.40810811, 0.99189189, 0.03594771, 0.96405229),
    "eigen": (0.3324324, 0.91351351, 0.0359477, 0.96405229),
    "center": (0.25, 0.75, 0.0, 1.0),
}


@dataclass(frozen=True)
class EvalReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    pixel_count: int
    cap: float
    scaling: str = "none"

    @property
    def empty(self) -> bool:
        return self.pixel_count == 0

    @classmethod
    def empty_report(cls, cap: float, scaling: str = "none") -> "EvalReport":
        nan = float("nan")
        return cls(nan, nan, nan, nan, nan, nan, nan, 0, cap, scaling)

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, m) for m in METRICS)


def crop_mask(shape, crop: str | None) -> np.ndarray:
    h, w = shape
    if crop is None or crop == "none":
        return np.ones((h, w), bool)
    if crop not in CROPS:
        raise ValueError(f"unknown crop {crop!r}; choose from {sorted(CROPS)}")
    r0, r1, c0, c1 = (np.array(CROPS[crop]) * [h, h, w, w]).astype(np.int32)
    m = np.zeros((h, w), bool)
    m[r0:r1, c0:c1] = True
    return m


def _support(pred: ScalarMap, gt: ScalarMap, cap: float, crop: str | None) -> np.ndarray:
    if pred.shape != gt.shape:
        raise SizeError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    pred.require_units("meters", "predicted depth")
    gt.require_units("meters", "ground-truth depth")
    base = gt.valid & pred.valid & crop_mask(gt.shape, crop)
    if np.any(gt.data[base] <= 0):
        raise DomainError("non-positive ground-truth depth inside the valid support")
    return base & (gt.data <= cap)


def _errors(p: np.ndarray, g: np.ndarray) -> tuple[float, ...]:
    thresh = np.maximum(g / p, p / g)
    diff = p - g
    return (
        float(np.mean(np.abs(diff) / g)),
        float(np.mean(diff**2 / g)),
        float(np.sqrt(np.mean(diff**2))),
        float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        float(np.mean(thresh < 1.25)),
        float(np.mean(thresh < 1.25**2)),
        float(np.mean(thresh < 1.25**3)),
    )


def _median_ratio(p: np.ndarray, g: np.ndarray) -> float:
    return float(np.median(g) / np.median(p))


def compute_metrics(
    pred: ScalarMap,
    gt: ScalarMap,
    cap: float = 80.0,
    median_scale: bool = False,
    crop: str | bool | None = None,
) -> EvalReport:
    """Standard depth metrics over valid, cropped pixels with ``0 < gt <= cap``.

    With ``median_scale`` the prediction is first multiplied by
    ``median(gt) / median(pred)``; predictions are then clamped to
    ``[CAP_MIN, cap]``. ``crop=True`` selects the Garg crop.
    """
    if crop is True:
        crop = "garg"
    support = _support(pred, gt, cap, crop or None)
    if not support.any():
        raise NoSupportError("no ground-truth pixels left after crop and cap")
    p = pred.data[support]
    g = gt.data[support]
    if median_scale:
        p = p * _median_ratio(p, g)
    p = np.clip(p, CAP_MIN, cap)
    return EvalReport(*_errors(p, g), int(support.sum()), cap,
                      "median" if median_scale else "none")


REGIONS = ("static", "moving", "all")


def region_metrics(
    pred: ScalarMap,
    gt: ScalarMap,
    moving: np.ndarray,
    cap: float = 80.0,
    median_scale: bool = False,
    crop: str | bool | None = None,
) -> dict[str, EvalReport]:
    """Metrics restricted to static pixels, moving pixels, and all pixels.

    ``moving`` is a boolean raster. Median scaling, when requested, uses one
    factor from the whole area so the region reports stay comparable. An empty
    region yields an :meth:`EvalReport.empty_report`.
    """
    if crop is True:
        crop = "garg"
    moving = np.asarray(moving, dtype=bool)
    if moving.shape != gt.shape:
        raise SizeError(f"region mask {moving.shape} does not match depth {gt.shape}")
    support = _support(pred, gt, cap, crop or None)
    scaling = "median" if median_scale else "none"
    if not support.any():
        return {name: EvalReport.empty_report(cap, scaling) for name in REGIONS}
    factor = _median_ratio(pred.data[support], gt.data[support]) if median_scale else 1.0
    out = {}
    for name, sel in (("static", support & ~moving), ("moving", support & moving), ("all", support)):
        if not sel.any():
            out[name] = EvalReport.empty_report(cap, scaling)
            continue
        p = np.clip(pred.data[sel] * factor, CAP_MIN, cap)
        out[name] = EvalReport(*_errors(p, gt.data[sel]), int(sel.sum()), cap, scaling)
    return out


def mean_report(reports: list[EvalReport]) -> EvalReport:
    """Unweighted mean of per-frame metrics; pixel_count is the total."""
    reports = [r for r in reports if not r.empty]
    if not reports:
        raise NoSupportError("no frames to aggregate")
    vals = np.mean([r.values() for r in reports], axis=0)
    return EvalReport(*map(float, vals), sum(r.pixel_count for r in reports), reports[0].cap,
                      reports[0].scaling)


# -- manifests ----------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    pred: Path
    gt: Path
    regions: Path | None = None
    line: int = 0
    label: str = ""


@dataclass(frozen=True)
class EvalOptions:
    cap: float = 80.0
    median_scale: bool = False
    crop: str | None = None
    regions: bool = False
    pred_format: str | None = None
    gt_format: str | None = None


@dataclass
class SplitResult:
    frames: list[tuple[str, EvalReport | dict[str, EvalReport]]] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)
    mean: EvalReport | dict[str, EvalReport] | None = None

    @property
    def frame_count(self) -> int:
        return len(self.frames)


def read_manifest(path) -> list[ManifestEntry]:
    """``pred<TAB>gt[<TAB>regions]`` lines; blank lines and ``#`` comments skipped.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) not in (2, 3):
            raise FormatError(f"{path}:{lineno}: expected 2 or 3 tab-separated paths, got {len(cols)}")
        paths = [base / c.strip() for c in cols]
        entries.append(ManifestEntry(paths[0], paths[1], paths[2] if len(paths) == 3 else None,
                                     lineno, cols[0].strip()))
    return entries


def _thread_count() -> int | None:
    n = int(os.environ.get("TEMPEO_THREADS", "0") or 0)
    return None if n <= 0 else n


def _evaluate_entry(entry: ManifestEntry, opts: EvalOptions):
    pred = read_depth(entry.pred, opts.pred_format)
    gt = read_depth(entry.gt, opts.gt_format)
    if opts.regions:
        if entry.regions is None:
            raise TempeoError(f"line {entry.line}: region evaluation needs a third column")
        moving = read_mask_png(entry.regions).data > 0.5
        return region_metrics(pred, gt, moving, opts.cap, opts.median_scale, opts.crop)
    return compute_metrics(pred, gt, opts.cap, opts.median_scale, opts.crop)


def evaluate_split(manifest, opts: EvalOptions | None = None) -> SplitResult:
    """Evaluate every manifest pair; failures become per-frame error entries.

    Frames are evaluated concurrently (``TEMPEO_THREADS`` caps the pool) but
    results keep manifest order.
    """
    opts = opts or EvalOptions()
    entries = read_manifest(manifest)
    if not entries:
        raise NoSupportError(f"{manifest}: manifest lists no frames")

    def run(entry):
        try:
            return entry, _evaluate_entry(entry, opts), None
        except (TempeoError, OSError, ValueError) as exc:
            return entry, None, f"{type(exc).__name__}: {exc}"

    result = SplitResult()
    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        for entry, report, err in pool.map(run, entries):
            name = entry.label or entry.pred.name
            if err is not None:
                log.debug("skipping %s: %s", name, err)
                result.errors.append((name, err))
            else:
                result.frames.append((name, report))
    if not result.frames:
        return result
    if opts.regions:
        result.mean = {}
        for region in REGIONS:
            reps = [rep[region] for _, rep in result.frames if not rep[region].empty]
            result.mean[region] = mean_report(reps) if reps else EvalReport.empty_report(opts.cap)
    else:
        result.mean = mean_report([rep for _, rep in result.frames])
    return result


def _fmt(x) -> str:
    return "nan" if isinstance(x, float) and np.isnan(x) else repr(float(x))


def report_row(label: str, rep: EvalReport) -> list[str]:
    return [label] + [_fmt(v) for v in rep.values()] + [str(rep.pixel_count)]


def write_report_csv(path, result: SplitResult) -> None:
    """Per-frame rows plus a final ``MEAN`` row (one block per region when split)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if isinstance(result.mean, dict):
            w.writerow(["region", "frame", *METRICS, "pixel_count"])
            for region in REGIONS:
                for name, rep in result.frames:
                    w.writerow([region, *report_row(name, rep[region])])
                w.writerow([region, *report_row("MEAN", result.mean[region])])
        else:
            w.writerow(["frame", *METRICS, "pixel_count"])
            for name, rep in result.frames:
                w.writerow(report_row(name, rep))
            if result.mean is not None:
                w.writerow(report_row("MEAN", result.mean))

