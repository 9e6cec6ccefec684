"""Fixture builders shared by the test modules."""

import numpy as np

from tempeo.geometry import Intrinsics, se3_exp
from tempeo.imagery import ScalarMap


def smooth_image(rng, h, w, terms=4, channels=None):
    """Sum of low-frequency sinusoids, kept inside (0, 1)."""
    v, u = np.mgrid[0:h, 0:w].astype(float)
    planes = []
    for _ in range(channels or 1):
        acc = np.full((h, w), 0.5)
        for _ in range(terms):
            fu, fv = rng.uniform(0.03, 0.2, 2)
            acc += 0.08 * np.sin(2 * np.pi * (fu * u + fv * v) + rng.uniform(0, 2 * np.pi))
        planes.append(acc)
    out = planes[0] if channels is None else np.stack(planes, axis=-1)
    return np.clip(out, 0.0, 1.0)


def camera(h, w, f=None):
    f = f or 1.2 * w
    return Intrinsics(f, f, (w - 1) / 2, (h - 1) / 2)


def small_pose(rng, rot=0.02, trans=0.05):
    return se3_exp(np.concatenate([rng.normal(scale=rot, size=3),
                                   rng.normal(scale=trans, size=3)]))


def depth_map(rng, h, w, lo=2.0, hi=6.0):
    return ScalarMap(rng.uniform(lo, hi, (h, w)), "meters")


def smooth_depth(rng, h, w, lo=2.0, hi=6.0):
    d = smooth_image(rng, h, w, terms=2)
    return ScalarMap(lo + (hi - lo) * d, "meters")


def k_tuple(k):
    return (k.fx, k.fy, k.cx, k.cy)
