"""Depth estimation toolkit for temporally consistent monocular video.

Pinhole geometry and SE(3), differentiable warping, training losses, moving
object masks, direct pose refinement, depth evaluation and dataset I/O.
"""

from .errors import (
    DomainError,
    FormatError,
    InvalidDepthError,
    NoSupportError,
    SingularRotationError,
    SizeError,
    TempeoError,
    UnitsError,
)
from .geometry import Intrinsics, Pose, compose, inverse, se3_exp, se3_log
from .imagery import FlowField, Image, ScalarMap

__version__ = "0.1.0"
