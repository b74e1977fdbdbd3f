"""Multi-identity face reenactment toolkit.

Two-stage pipeline: a landmark converter retargets facial expressions
between identities in a 106-point landmark space, and a geometry-aware
generator renders the target face from a reference image plus a rasterized
landmark image.
"""

__version__ = "0.1.0"

from reenact.landmarks import (
    Landmark,
    LandmarkEdit,
    LandmarkImage,
    ace,
    interpolate,
    manipulate,
    normalize_landmarks,
    rasterize,
)

__all__ = [
    "Landmark",
    "LandmarkEdit",
    "LandmarkImage",
    "ace",
    "interpolate",
    "manipulate",
    "normalize_landmarks",
    "rasterize",
]
