"""Radiometric calibration: response-curve recovery from a color-card
exposure stack, MTB stack alignment, radiance fusion, and absolute light
intensity from a gray-card photo.

Radiance maps are exposure-normalized (values are divided by exposure time
during fusion), so the calibrated light intensity E carries no exposure
factor and rescales purely with the inverse square of the capture distance.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .brdf import lambertian_reference
from .errors import CalibrationError, InvalidInputError
from .geometry import SceneGeometry, image_plane_grid, incident_geometry
from .imageops import grayscale

CARD_ROWS = 15
CARD_COLS = 20
Z_LEVELS = 256
MTB_EXCLUSION_BAND = 4


def hat_weight(z) -> np.ndarray:
    """Confidence of a pixel value: min(z, 255-z), floored at 1 so weighted
    averages never divide by zero."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(np.minimum(z, 255.0 - z), 1.0)


@dataclass
class ResponseCurve:
    """Per-channel table g mapping pixel value 0..255 to log(radiance * time)."""

    g: np.ndarray  # (256, 3)

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.float64)
        if self.g.shape != (Z_LEVELS, 3):
            raise InvalidInputError("response curve must have shape (256, 3)")
        if not np.all(np.isfinite(self.g)):
            raise InvalidInputError("response curve must be finite everywhere")

    def log_exposure(self, z: np.ndarray, channel: int) -> np.ndarray:
        return self.g[np.asarray(z, dtype=np.intp), channel]

    def invert(self, log_lt: np.ndarray, channel: int) -> np.ndarray:
        """Pixel value for a log(L*t) target, by monotone table inversion."""
        # Strictly increasing envelope so np.interp is well-defined on flats.
        env = np.maximum.accumulate(self.g[:, channel])
        env = env + np.arange(Z_LEVELS) * 1e-12
        return np.interp(log_lt, env, np.arange(Z_LEVELS, dtype=np.float64))

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["Z", "g_R", "g_G", "g_B"])
            for z in range(Z_LEVELS):
                writer.writerow([z] + [repr(float(self.g[z, c])) for c in range(3)])

    @classmethod
    def load_csv(cls, path) -> "ResponseCurve":
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"response curve file not found: {path}")
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:1] != ["Z"]:
                raise InvalidInputError(f"malformed response curve CSV: {path}")
            for row in reader:
                rows.append([float(v) for v in row[1:4]])
        if len(rows) != Z_LEVELS:
            raise InvalidInputError(f"response curve CSV must have 256 rows, got {len(rows)}")
        return cls(g=np.array(rows))

    @classmethod
    def linear(cls) -> "ResponseCurve":
        """Ideal linear camera: g(Z) = ln(Z/255), with Z=0 mapped to half a level."""
        z = np.arange(Z_LEVELS, dtype=np.float64)
        z[0] = 0.5
        g = np.log(z / 255.0)
        return cls(g=np.stack([g, g, g], axis=-1))


@dataclass
class ExposureStack:
    """LDR 8-bit images of one scene under strictly positive, distinct times."""

    images: list
    exposures: list

    def __post_init__(self):
        if len(self.images) == 0:
            raise InvalidInputError("exposure stack must contain at least one image")
        if len(self.images) != len(self.exposures):
            raise InvalidInputError("image count and exposure count differ")
        shape = np.asarray(self.images[0]).shape
        for img in self.images:
            if np.asarray(img).shape != shape:
                raise InvalidInputError("all stack images must share dimensions")
        exp = np.asarray(self.exposures, dtype=np.float64)
        if np.any(exp <= 0):
            raise InvalidInputError("exposure times must be positive")
        if len(np.unique(exp)) != len(exp):
            raise InvalidInputError("exposure times must be pairwise distinct")


def generate_color_card(rows: int = CARD_ROWS, cols: int = CARD_COLS,
                        tile_px: int = 32, seed: int = 0) -> np.ndarray:
    """Random uniformly-colored tile chart, a stand-in for a physical color chart."""
    if tile_px < 1:
        raise InvalidInputError("tile_px must be >= 1")
    rng = np.random.default_rng(seed)
    tiles = rng.integers(0, 256, size=(rows, cols, 3), dtype=np.uint8)
    return np.repeat(np.repeat(tiles, tile_px, axis=0), tile_px, axis=1)


def downsample_card(photo: np.ndarray) -> np.ndarray:
    """Average-filter a card photo down to the 20x15 tile grid (300 samples)."""
    photo = np.asarray(photo)
    if photo.ndim != 3 or photo.shape[2] != 3:
        raise InvalidInputError("card photo must be an RGB image")
    if photo.shape[0] < CARD_ROWS or photo.shape[1] < CARD_COLS:
        raise InvalidInputError(
            f"card photo must be at least {CARD_COLS}x{CARD_ROWS}, got {photo.shape[1]}x{photo.shape[0]}"
        )
    return cv2.resize(photo.astype(np.float32), (CARD_COLS, CARD_ROWS),
                      interpolation=cv2.INTER_AREA).astype(np.float64)


def _median_bitmaps(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    median = np.median(gray)
    bitmap = gray > median
    exclusion = np.abs(gray - median) > MTB_EXCLUSION_BAND
    return bitmap, exclusion


def _shift_2d(arr: np.ndarray, dx: int, dy: int, fill=False) -> np.ndarray:
    """Translate content by (+dx cols, +dy rows), filling vacated cells."""
    out = np.full_like(arr, fill)
    h, w = arr.shape
    src_r = slice(max(0, -dy), min(h, h - dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_r = slice(max(0, dy), min(h, h + dy))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[dst_r, dst_c] = arr[src_r, src_c]
    return out


def _halve(gray: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    return cv2.resize(gray, (max(1, w // 2), max(1, h // 2)), interpolation=cv2.INTER_AREA)


def _search_steps(radius: int):
    """Offsets -radius..radius ordered small-to-large so ties keep the
    smallest correction."""
    return sorted(range(-radius, radius + 1), key=abs)


def _mtb_offset(ref: np.ndarray, img: np.ndarray, max_shift: int) -> tuple[int, int]:
    if max_shift > 1 and min(ref.shape) >= 64:
        dx0, dy0 = _mtb_offset(_halve(ref), _halve(img), (max_shift + 1) // 2)
        dx0, dy0 = 2 * dx0, 2 * dy0
        radius = 1
    else:
        # Coarsest level: the bitmap is small, so search the whole range.
        dx0, dy0 = 0, 0
        radius = max_shift
    ref_bits, ref_keep = _median_bitmaps(ref)
    img_bits, img_keep = _median_bitmaps(img)
    best = (dx0, dy0)
    best_err = None
    for ddy in _search_steps(radius):
        for ddx in _search_steps(radius):
            dx, dy = dx0 + ddx, dy0 + ddy
            shifted_bits = _shift_2d(img_bits, dx, dy)
            shifted_keep = _shift_2d(img_keep, dx, dy)
            err = int(np.sum((ref_bits ^ shifted_bits) & ref_keep & shifted_keep))
            if best_err is None or err < best_err:
                best_err = err
                best = (dx, dy)
    return best


def mtb_align(stack: ExposureStack, max_shift: int = 16) -> list[tuple[int, int]]:
    """Integer (dx, dy) correction per image aligning it to the first image.

    Median-threshold bitmaps are exposure-invariant, so the same scene under
    different exposure times thresholds to (nearly) the same bitmap. The
    translation is found coarse-to-fine on a half-resolution pyramid (+-1 px
    per level, exhaustive at the coarsest level). Values within +-4 levels of
    the median are excluded from the error count.
    """
    if max_shift < 0:
        raise InvalidInputError("max_shift must be non-negative")
    grays = [grayscale(np.asarray(img, dtype=np.float64)) for img in stack.images]
    offsets = [(0, 0)]
    for img in grays[1:]:
        offsets.append(_mtb_offset(grays[0], img, max_shift) if max_shift else (0, 0))
    return offsets


def apply_shifts(stack: ExposureStack, offsets) -> ExposureStack:
    """Translate every stack image by its correction offset (zero fill)."""
    shifted = []
    for img, (dx, dy) in zip(stack.images, offsets):
        img = np.asarray(img)
        if dx == 0 and dy == 0:
            shifted.append(img.copy())
        else:
            channels = [_shift_2d(img[..., c], dx, dy, fill=0) for c in range(img.shape[2])]
            shifted.append(np.stack(channels, axis=-1))
    return ExposureStack(images=shifted, exposures=list(stack.exposures))


def solve_response(samples: np.ndarray, exposures, lam_smooth: float = 100.0,
                   weight_fn=hat_weight) -> ResponseCurve:
    """Recover g from card samples via a regularized linear least-squares solve.

    samples: (n_cells, n_exposures, 3) pixel values (rounded to 0..255).
    Unknowns per channel are the 256 curve values plus one log radiance per
    cell; rows are the weighted data equations, the gauge g(127) = 0, and
    second-difference smoothness rows scaled by lam_smooth.
    """
    samples = np.asarray(samples)
    if samples.ndim != 3 or samples.shape[2] != 3:
        raise InvalidInputError("samples must have shape (cells, exposures, 3)")
    n_cells, n_exp = samples.shape[:2]
    if n_exp < 2:
        raise InvalidInputError("response solve needs at least two exposures")
    exposures = np.asarray(exposures, dtype=np.float64)
    if exposures.shape != (n_exp,):
        raise InvalidInputError("exposure count does not match samples")
    z_all = np.clip(np.rint(samples), 0, 255).astype(np.intp)
    log_t = np.log(exposures)

    w_table = weight_fn(np.arange(Z_LEVELS))
    g = np.empty((Z_LEVELS, 3))
    for c in range(3):
        z = z_all[:, :, c]
        if np.ptp(z) < 2:
            raise CalibrationError(
                f"channel {c}: samples span fewer than 3 pixel levels; cannot fit a curve"
            )
        n_rows = n_cells * n_exp + 1 + (Z_LEVELS - 2)
        n_unknowns = Z_LEVELS + n_cells
        a = np.zeros((n_rows, n_unknowns))
        b = np.zeros(n_rows)
        k = 0
        for i in range(n_cells):
            for j in range(n_exp):
                w = w_table[z[i, j]]
                a[k, z[i, j]] = w
                a[k, Z_LEVELS + i] = -w
                b[k] = w * log_t[j]
                k += 1
        a[k, 127] = 1.0  # gauge: g(127) = 0
        k += 1
        for zi in range(1, Z_LEVELS - 1):
            w = lam_smooth * w_table[zi]
            a[k, zi - 1] = w
            a[k, zi] = -2.0 * w
            a[k, zi + 1] = w
            k += 1
        solution, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
        if rank < n_unknowns:
            raise CalibrationError(f"channel {c}: response system is rank-deficient")
        g[:, c] = solution[:Z_LEVELS]
    return ResponseCurve(g=g)


def merge_radiance(stack: ExposureStack, curve: ResponseCurve) -> np.ndarray:
    """Fuse an aligned stack into one exposure-normalized radiance map.

    Per pixel and channel, ln L is the hat-weighted mean of g(Z_j) - ln t_j.
    Pixels saturated in every frame fall back to the shortest exposure's
    estimate (the least-clipped one).
    """
    if len(stack.images) == 0:
        raise InvalidInputError("cannot merge an empty stack")
    imgs = np.stack([np.clip(np.rint(np.asarray(im, dtype=np.float64)), 0, 255).astype(np.intp)
                     for im in stack.images])
    log_t = np.log(np.asarray(stack.exposures, dtype=np.float64))
    shortest = int(np.argmin(stack.exposures))

    out = np.empty(imgs.shape[1:], dtype=np.float64)
    for c in range(3):
        z = imgs[..., c]
        w = hat_weight(z)
        log_l = curve.g[z, c] - log_t[:, None, None]
        fused = np.sum(w * log_l, axis=0) / np.sum(w, axis=0)
        all_saturated = np.all(z >= 255, axis=0)
        fused = np.where(all_saturated, curve.g[255, c] - log_t[shortest], fused)
        out[..., c] = np.exp(fused)
    return out


def gray_card_intensity(gray_radiance: np.ndarray, geom: SceneGeometry) -> float:
    """Invert the point-light render of an 18% Lambertian card to recover E.

    E(p) = L(p) r(p)^2 / (f_gray cos theta_i); the mean is taken over the
    central 50% crop (borders are more vignetting-prone) and all channels.
    """
    radiance = np.asarray(gray_radiance, dtype=np.float64)
    if radiance.ndim != 3 or radiance.shape[2] != 3:
        raise InvalidInputError("gray-card radiance must be an RGB map")
    h, w = radiance.shape[:2]
    points = image_plane_grid(h, w, geom.pixel_pitch)
    normal = np.array([0.0, 0.0, 1.0])
    _, _, r, cos_theta = incident_geometry(points, geom, normal)

    r0, r1 = h // 4, h - h // 4
    c0, c1 = w // 4, w - w // 4
    cos_crop = cos_theta[r0:r1, c0:c1]
    valid = cos_crop > 0
    if not np.any(valid):
        raise CalibrationError("no gray-card pixels receive light (cos theta <= 0 everywhere)")
    e_map = (radiance[r0:r1, c0:c1] * (r[r0:r1, c0:c1] ** 2 / np.where(valid, cos_crop, 1.0))[..., None]
             / lambertian_reference())
    return float(e_map[valid].mean())


def scale_intensity(e_gray: float, r_gray: float, r_sample: float) -> float:
    """Rescale the calibrated intensity to a different capture height."""
    if r_gray <= 0 or r_sample <= 0:
        raise InvalidInputError("capture distances must be positive")
    return e_gray * (r_gray / r_sample) ** 2
