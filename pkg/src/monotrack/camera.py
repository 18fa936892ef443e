"""Pinhole-camera geometry for monocular tracking.

Coordinate conventions
----------------------
Camera frame: x rightward, y downward, z forward along the optical axis,
in meters.  Image frame: origin at the top-left pixel corner, u rightward,
v downward, in pixels.  With v growing downward, the bottom edge of an
upright object has the largest v coordinate.

A point (x, y, z) with z > 0 in front of the camera projects through the
pinhole onto the focal plane f meters ahead of it, and is expressed in
pixels by dividing with the square pixel side length and shifting by the
principal point:

    u = (f / (|px| z)) x + c_u
    v = (f / (|px| z)) y + c_v

Differentiating this map in time gives the image velocity of a moving
point, and applying it to an axis-aligned segment of length s at depth z
gives the projected extent s_I = (f / (|px| z)) s together with its rate.

All projections reject depths at or below ``DEPTH_EPSILON`` rather than
extrapolating through the z = 0 singularity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DepthNonPositive, NonPositiveHeight

# Depths at or below this bound (meters) count as "behind the camera".
DEPTH_EPSILON = 1e-6


class Point3(NamedTuple):
    """Position in the camera frame, meters."""

    x: float
    y: float
    z: float


class Velocity3(NamedTuple):
    """Velocity in the camera frame, meters per second."""

    vx: float
    vy: float
    vz: float


class ImagePoint(NamedTuple):
    """Pixel position, origin at the top-left corner."""

    u: float
    v: float


class ExtentPair(NamedTuple):
    """An axis-aligned extent and its time derivative.

    Meters and meters per second in the camera frame, pixels and pixels
    per second in the image frame.
    """

    length: float
    rate: float


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: focal length, pixel pitch, principal point."""

    focal_length_m: float = 1e-3
    pixel_size_m: float = 1e-6
    principal_point_px: tuple[float, float] = (960.0, 540.0)

    def __post_init__(self) -> None:
        if not (self.focal_length_m > 0 and np.isfinite(self.focal_length_m)):
            raise ValueError(f"focal length must be positive, got {self.focal_length_m}")
        if not (self.pixel_size_m > 0 and np.isfinite(self.pixel_size_m)):
            raise ValueError(f"pixel size must be positive, got {self.pixel_size_m}")
        pp = (float(self.principal_point_px[0]), float(self.principal_point_px[1]))
        object.__setattr__(self, "principal_point_px", pp)
        if not np.isfinite(self.focal_px):
            raise ValueError("focal length in pixels is not finite")

    @property
    def focal_px(self) -> float:
        """Focal length expressed in pixels, f / |px|."""
        return self.focal_length_m / self.pixel_size_m

    @classmethod
    def for_image(
        cls,
        image_size: tuple[int, int],
        focal_length_m: float = 1e-3,
        pixel_size_m: float = 1e-6,
    ) -> "CameraIntrinsics":
        """Intrinsics with the principal point at the image center."""
        width, height = image_size
        return cls(focal_length_m, pixel_size_m, (width / 2.0, height / 2.0))


def _check_depth(z: float) -> None:
    if not z > DEPTH_EPSILON:
        raise DepthNonPositive(f"depth {z} m is at or behind the camera plane")


def project_point(cam: CameraIntrinsics, point: Point3) -> ImagePoint:
    """Project a camera-frame point to pixel coordinates."""
    x, y, z = point
    _check_depth(z)
    scale = cam.focal_px / z
    cu, cv = cam.principal_point_px
    return ImagePoint(scale * x + cu, scale * y + cv)


def project_velocity(
    cam: CameraIntrinsics, point: Point3, velocity: Velocity3
) -> np.ndarray:
    """Image velocity (px/s) of a camera-frame point with the given velocity.

    Time derivative of the projection: the depth rate drags the pixel
    toward (or away from) the principal point in addition to the lateral
    motion.
    """
    x, y, z = point
    vx, vy, vz = velocity
    _check_depth(z)
    scale = cam.focal_px / z
    return np.array([scale * (vx - vz * x / z), scale * (vy - vz * y / z)])


def project_extent(
    cam: CameraIntrinsics, extent: ExtentPair, z: float, vz: float = 0.0
) -> ExtentPair:
    """Project an axis-aligned extent and its rate to pixels at depth z."""
    _check_depth(z)
    scale = cam.focal_px / z
    length, rate = extent
    return ExtentPair(scale * length, scale * (rate - vz * length / z))


def depth_from_height(
    cam: CameraIntrinsics, height_m: float, height_px: float
) -> float:
    """Depth at which a segment of known metric height spans height_px pixels."""
    if not height_m > 0:
        raise NonPositiveHeight(f"metric height must be positive, got {height_m}")
    if not height_px > 0:
        raise NonPositiveHeight(f"pixel height must be positive, got {height_px}")
    return cam.focal_px * height_m / height_px


def backproject_point(
    cam: CameraIntrinsics, pixel: ImagePoint, depth: float
) -> Point3:
    """Camera-frame point at the given depth along a pixel's viewing ray."""
    _check_depth(depth)
    u, v = pixel
    cu, cv = cam.principal_point_px
    scale = depth / cam.focal_px
    return Point3(scale * (u - cu), scale * (v - cv), depth)
