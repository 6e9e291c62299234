"""Normalized scene frame: material in the z=0 plane, camera at (0, 0, 1).

Pixel (row, col) maps to world ((col - (w-1)/2) * delta, ((h-1)/2 - row) * delta, 0):
+col is +x, +row is -y, the image center sits at the origin. All world
quantities are expressed in units of the camera height above the plane.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidInputError

# Diagonal of 135-format film in millimetres.
D35_MM = 43.3


@dataclass(frozen=True)
class CameraSpec:
    """Camera intrinsics reduced to a 35 mm-equivalent focal length."""

    f35: float
    image_width: int
    image_height: int
    d35: float = D35_MM

    def __post_init__(self):
        if not self.f35 > 0:
            raise InvalidInputError(f"f35 must be positive, got {self.f35}")
        if self.image_width < 2 or self.image_height < 2:
            raise InvalidInputError(
                f"image dimensions must be >= 2, got {self.image_width}x{self.image_height}"
            )


@dataclass(frozen=True)
class SceneGeometry:
    """Normalized camera/light placement plus the physical scale anchors."""

    light_pos: np.ndarray
    pixel_pitch: float
    r_perp: float
    light_intensity: float
    camera_pos: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "light_pos", np.asarray(self.light_pos, dtype=np.float64))
        object.__setattr__(self, "camera_pos", np.asarray(self.camera_pos, dtype=np.float64))
        if self.light_pos.shape != (3,):
            raise InvalidInputError("light_pos must be a 3-vector")
        if abs(self.light_pos[2] - 1.0) > 1e-9:
            raise InvalidInputError("light_pos must lie in the z=1 plane")
        if not self.pixel_pitch > 0:
            raise InvalidInputError("pixel_pitch must be positive")
        if not self.r_perp > 0:
            raise InvalidInputError("r_perp must be positive")
        if self.light_intensity < 0:
            raise InvalidInputError("light_intensity must be non-negative")


def half_aov(camera: CameraSpec) -> float:
    """Diagonal half angle of view in radians: arctan(d35 / (2 f35))."""
    return float(np.arctan(camera.d35 / (2.0 * camera.f35)))


def pixel_pitch(camera: CameraSpec) -> float:
    """World displacement per pixel: d35 / (f35 * sqrt(w^2 + h^2))."""
    diag_px = float(np.hypot(camera.image_width, camera.image_height))
    return camera.d35 / (camera.f35 * diag_px)


def pixel_to_world(pixel, camera: CameraSpec, delta: float) -> np.ndarray:
    """Map (row, col) pixel indices to points on the z=0 material plane.

    Accepts scalars or broadcasting arrays for row/col; returns (..., 3).
    """
    row = np.asarray(pixel[0], dtype=np.float64)
    col = np.asarray(pixel[1], dtype=np.float64)
    if np.any(row < 0) or np.any(row > camera.image_height - 1) \
            or np.any(col < 0) or np.any(col > camera.image_width - 1):
        raise InvalidInputError("pixel index out of image bounds")
    x = (col - (camera.image_width - 1) / 2.0) * delta
    y = ((camera.image_height - 1) / 2.0 - row) * delta
    return np.stack(np.broadcast_arrays(x, y, np.zeros_like(x)), axis=-1)


def world_to_pixel(point, camera: CameraSpec, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of pixel_to_world; returns fractional (row, col)."""
    point = np.asarray(point, dtype=np.float64)
    col = point[..., 0] / delta + (camera.image_width - 1) / 2.0
    row = (camera.image_height - 1) / 2.0 - point[..., 1] / delta
    return row, col


def image_plane_grid(height: int, width: int, delta: float) -> np.ndarray:
    """(H, W, 3) world positions of every pixel center on z=0."""
    camera = CameraSpec(f35=1.0, image_width=width, image_height=height)
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return pixel_to_world((rows, cols), camera, delta)


def estimate_light_position(point_image: np.ndarray, camera: CameraSpec, delta: float) -> np.ndarray:
    """Locate the flash: intensity-weighted centroid of the brightest 10% of pixels.

    The 10% is by pixel count. The returned position has z = 1 (light assumed
    in the camera plane).
    """
    img = np.asarray(point_image, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError("point_image must be a single-channel grid")
    flat = img.ravel()
    if np.ptp(flat) == 0:
        raise DegenerateInputError("point image is constant; cannot locate the light")
    n_top = max(1, int(0.1 * flat.size))
    top_idx = np.argpartition(flat, flat.size - n_top)[-n_top:]
    weights = flat[top_idx]
    if weights.sum() <= 0:
        raise DegenerateInputError("brightest pixels carry zero intensity")
    rows, cols = np.unravel_index(top_idx, img.shape)
    world = pixel_to_world((rows, cols), camera, delta)
    centroid = (world * weights[:, None]).sum(axis=0) / weights.sum()
    return np.array([centroid[0], centroid[1], 1.0])


def incident_geometry(p: np.ndarray, geom: SceneGeometry, n: np.ndarray):
    """Lighting geometry at surface points p (..., 3) with unit normals n.

    Returns (omega_i, omega_o, r, cos_theta_i): unit directions toward the
    light and camera, distance to the light, and n . omega_i (unclamped).
    """
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    to_light = geom.light_pos - p
    r = np.linalg.norm(to_light, axis=-1)
    if np.any(r < 1e-12):
        raise DegenerateInputError("surface point coincides with the light")
    omega_i = to_light / r[..., None]
    to_cam = geom.camera_pos - p
    d_cam = np.linalg.norm(to_cam, axis=-1)
    if np.any(d_cam < 1e-12):
        raise DegenerateInputError("surface point coincides with the camera")
    omega_o = to_cam / d_cam[..., None]
    cos_theta_i = np.sum(n * omega_i, axis=-1)
    return omega_i, omega_o, r, cos_theta_i
