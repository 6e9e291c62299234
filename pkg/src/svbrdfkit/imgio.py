"""Image file plumbing. Arrays are RGB ordered; cv2's BGR is flipped here and
nowhere else. Scalar maps are stored as 16-bit PNG with value = round(x * 65535);
signed vector maps (normals, tangents) are stored as (v + 1) / 2.
"""

from pathlib import Path

import cv2
import numpy as np

from .errors import InvalidInputError
from . import exr

U16_MAX = 65535


def _check_exists(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"image file not found: {path}")
    return path


def load_image_u8(path) -> np.ndarray:
    """8-bit RGB image as (H, W, 3) uint8."""
    raw = cv2.imread(str(_check_exists(path)), cv2.IMREAD_COLOR)
    if raw is None:
        raise InvalidInputError(f"could not decode image: {path}")
    return cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)


def save_image_u8(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise InvalidInputError("save_image_u8 expects uint8 data")
    if image.ndim == 3:
        image = cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), image):
        raise InvalidInputError(f"could not write image: {path}")


def save_png16(path, values: np.ndarray) -> None:
    """Unit-range float map -> 16-bit PNG (single or 3 channel)."""
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < -1e-9) or np.any(values > 1 + 1e-9):
        raise InvalidInputError("png16 maps must lie in [0, 1]")
    data = np.rint(np.clip(values, 0.0, 1.0) * U16_MAX).astype(np.uint16)
    if data.ndim == 3:
        data = cv2.cvtColor(data, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), data):
        raise InvalidInputError(f"could not write image: {path}")


def load_png16(path) -> np.ndarray:
    raw = cv2.imread(str(_check_exists(path)), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidInputError(f"could not decode image: {path}")
    if raw.dtype != np.uint16:
        raise InvalidInputError(f"expected a 16-bit PNG: {path}")
    if raw.ndim == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return raw.astype(np.float64) / U16_MAX


def save_png16_signed(path, vectors: np.ndarray) -> None:
    """[-1, 1] vector map -> 16-bit PNG via the (v + 1) / 2 encoding."""
    save_png16(path, (np.asarray(vectors, dtype=np.float64) + 1.0) / 2.0)


def load_png16_signed(path) -> np.ndarray:
    return load_png16(path) * 2.0 - 1.0


def save_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.max() > U16_MAX:
        raise InvalidInputError("label indices exceed 16-bit range")
    if not cv2.imwrite(str(path), labels.astype(np.uint16)):
        raise InvalidInputError(f"could not write image: {path}")


def load_labels(path) -> np.ndarray:
    raw = cv2.imread(str(_check_exists(path)), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidInputError(f"could not decode image: {path}")
    return raw.astype(np.int32)


def save_exr(path, image: np.ndarray) -> None:
    exr.write_exr(path, image)


def load_exr(path) -> np.ndarray:
    return exr.read_exr(_check_exists(path))
