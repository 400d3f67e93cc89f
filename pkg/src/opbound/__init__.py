"""Numerical decision procedures for operator spaces, completely positive and
completely contractive maps, rectangular matrix convexity and boundary
representations, at desk scale."""
from . import (boundary, certificates, cpmaps, gauge, numkernel, opspace, rectconvex, rkhs,
               sdp)
from .errors import OpBoundError

__all__ = ["boundary", "certificates", "cpmaps", "gauge", "numkernel", "opspace", "rectconvex",
           "rkhs", "sdp", "OpBoundError"]
__version__ = "0.1.0"
