"""Small shared raster operations: luminance, blurring, Sobel gradients.

All filters use mirrored border extension so that constant inputs stay
constant and smooth fields keep their mean.
"""

import numpy as np
from scipy.ndimage import gaussian_filter, sobel

# Luminance blend; same weights as the specular tint normalization in brdf.py.
LUMA_WEIGHTS = np.array([0.3, 0.6, 0.1])


def grayscale(image: np.ndarray) -> np.ndarray:
    """Collapse an (..., 3) RGB array to single-channel luminance."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim >= 1 and image.shape[-1] == 3:
        return image @ LUMA_WEIGHTS
    return image.astype(np.float64)


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur over the two leading (spatial) axes; sigma 0 is identity."""
    image = np.asarray(image, dtype=np.float64)
    if sigma <= 0:
        return image.copy()
    sigmas = (sigma, sigma) + (0,) * (image.ndim - 2)
    return gaussian_filter(image, sigma=sigmas, mode="mirror")


def sobel_gradients(grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (d/dcol, d/drow) derivatives, Sobel kernels scaled by 1/8."""
    grid = np.asarray(grid, dtype=np.float64)
    d_col = sobel(grid, axis=1, mode="mirror") / 8.0
    d_row = sobel(grid, axis=0, mode="mirror") / 8.0
    return d_col, d_row
