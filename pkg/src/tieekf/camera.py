"""Ideal pinhole camera: projection, its Jacobian and field-of-view tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Z_MIN = 1e-6
VISIBILITY_MARGIN = 2.0


class BehindCameraError(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float

    def __iter__(self):
        yield self.u
        yield self.v


def project(p_cam, intr: Intrinsics, z_min: float = Z_MIN) -> PixelPoint:
    X, Y, Z = np.asarray(p_cam, dtype=float).reshape(3)
    if not Z > z_min:
        raise BehindCameraError(f"point depth {Z} is not in front of the camera")
    return PixelPoint(intr.fx * X / Z + intr.cx, intr.fy * Y / Z + intr.cy)


def projection_jacobian(p_cam, intr: Intrinsics, z_min: float = Z_MIN) -> np.ndarray:
    """2x3 derivative of ``project`` with respect to the camera-frame point."""
    X, Y, Z = np.asarray(p_cam, dtype=float).reshape(3)
    if not Z > z_min:
        raise BehindCameraError(f"point depth {Z} is not in front of the camera")
    iz = 1.0 / Z
    return np.array(
        [
            [intr.fx * iz, 0.0, -intr.fx * X * iz * iz],
            [0.0, intr.fy * iz, -intr.fy * Y * iz * iz],
        ]
    )


def project_batch(points: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """Project a (3, N) array of camera-frame points to a (N, 2) pixel array.

    No depth check; callers mask on depth themselves.
    """
    X, Y, Z = points
    return np.stack([intr.fx * X / Z + intr.cx, intr.fy * Y / Z + intr.cy], axis=1)


def projection_jacobian_batch(points: np.ndarray, intr: Intrinsics) -> np.ndarray:
    X, Y, Z = points
    iz = 1.0 / Z
    out = np.zeros((points.shape[1], 2, 3))
    out[:, 0, 0] = intr.fx * iz
    out[:, 0, 2] = -intr.fx * X * iz * iz
    out[:, 1, 1] = intr.fy * iz
    out[:, 1, 2] = -intr.fy * Y * iz * iz
    return out


def in_view(pixels: np.ndarray, depths: np.ndarray, intr: Intrinsics,
            margin: float = VISIBILITY_MARGIN, z_min: float = Z_MIN) -> np.ndarray:
    """Per-point visibility mask for (N, 2) pixels and (N,) depths."""
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    depths = np.asarray(depths, dtype=float).reshape(-1)
    u, v = pixels[:, 0], pixels[:, 1]
    with np.errstate(invalid="ignore"):
        return (
            (depths > z_min)
            & (u >= margin) & (u <= intr.width - margin)
            & (v >= margin) & (v <= intr.height - margin)
        )


def corners_visible(pixels, depths, intr: Intrinsics,
                    margin: float = VISIBILITY_MARGIN, z_min: float = Z_MIN) -> bool:
    """True iff every corner is in front of the camera and inside the margin."""
    pixels = np.asarray([tuple(p) for p in pixels], dtype=float)
    return bool(np.all(in_view(pixels, depths, intr, margin, z_min)))
