"""Multi-scale dark-is-deep height recovery from the ambient image.

The ambient image divided by the current base-color estimate yields a
shading image S (normalized to mean 0.5). An analytic curve maps shading to
depth at several Gaussian scales; depth gradients then give the normal map.

Sign convention: the accumulated map d is a depth (negative under bright
protrusions), and normals are (dd/dx, dd/dy, 1) normalized, with x = +col
and y = world-up = -row. A bright hemisphere therefore gets normals tilting
away from its center, which is what the forward renderer expects.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidInputError
from .imageops import gaussian_blur, grayscale, sobel_gradients

EPS_CLAMP = 1e-3
DEFAULT_RADII = (1.0, 2.0, 4.0, 8.0)


@dataclass
class ShadingImage:
    """Grayscale shading ratio, normalized to mean 0.5."""

    values: np.ndarray


@dataclass
class HeightField:
    """Accumulated multi-scale depth plus the scales that produced it."""

    depth: np.ndarray
    sigma: float
    radii: tuple


def shading_image(ambient: np.ndarray, base_color: np.ndarray) -> ShadingImage:
    """Ambient / base-color ratio in luminance, rescaled to mean 0.5."""
    ga = grayscale(ambient)
    gb = grayscale(base_color)
    if ga.shape != gb.shape:
        raise InvalidInputError("ambient and base_color grids must share dimensions")
    if np.all(gb <= 1e-12):
        raise DegenerateInputError("base_color is all black; shading ratio undefined")
    s_raw = ga / np.maximum(gb, 1e-12)
    mean = s_raw.mean()
    if mean <= 0:
        raise DegenerateInputError("shading image has non-positive mean")
    s = s_raw * (0.5 / mean)
    return ShadingImage(values=np.maximum(s, EPS_CLAMP))


def depth_curve(s) -> np.ndarray:
    """Analytic shading-to-depth map: sqrt(1/S - 1) below 0.5, 2(1-S) above.

    Both branches meet at D(0.5) = 1; input is clamped to [EPS_CLAMP, 1].
    """
    s = np.clip(np.asarray(s, dtype=np.float64), EPS_CLAMP, 1.0)
    return np.where(s <= 0.5, np.sqrt(1.0 / s - 1.0), 2.0 * (1.0 - s))


def multiscale_depth(shading: ShadingImage, radii=DEFAULT_RADII, sigma: float = 0.5) -> HeightField:
    """Accumulate depth over Gaussian scales of the shading image.

    Each level's incremental shading l_i = 0.5 * S_i / S_{i+1} keeps mean 0.5,
    and depth_curve(l_i) - 1 keeps each level near zero mean, so levels sum.
    """
    radii = tuple(float(r) for r in radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise InvalidInputError("radii must be strictly ascending")
    s = np.asarray(shading.values, dtype=np.float64)
    levels = [gaussian_blur(s, r) for r in radii]
    depth = np.zeros_like(s)
    for i, r in enumerate(radii):
        if i + 1 < len(radii):
            l_i = 0.5 * levels[i] / np.maximum(levels[i + 1], EPS_CLAMP)
        else:
            l_i = levels[i]
        depth += r * (depth_curve(l_i) - 1.0)
    return HeightField(depth=sigma * depth, sigma=sigma, radii=radii)


def normals_from_depth(field: HeightField) -> np.ndarray:
    """Unit normals (dd/dx, dd/dy, 1)/|.| from Sobel gradients in pixel units.

    y is world-up, so the row derivative enters with a flipped sign.
    """
    d_col, d_row = sobel_gradients(field.depth)
    raw = np.stack([d_col, -d_row, np.ones_like(d_col)], axis=-1)
    return raw / np.linalg.norm(raw, axis=-1, keepdims=True)
