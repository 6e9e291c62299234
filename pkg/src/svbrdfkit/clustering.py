"""Pixel quantization for the ambient image: PCA-decorrelated color as
numeric attributes, multi-scale BRIEF bits as categorical attributes, fused
by k-prototypes under dist = ||num1 - num2||^2 + gamma * hamming(cat1, cat2).

Because the bits are 0/1, the Hamming term equals a squared Euclidean
distance on the bit columns, so assignments reduce to one squared-distance
computation on [numeric, sqrt(gamma) * bits]; only the center update
(mean vs per-bit majority) distinguishes the two attribute kinds.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidInputError
from .imageops import gaussian_blur

# (bits, window, blur sigma) per scale; 160 bits total.
BRIEF_SCALES = ((48, 33, 4.0), (80, 17, 2.0), (32, 5, 0.0))
BRIEF_BITS = sum(s[0] for s in BRIEF_SCALES)
DEFAULT_K = 500
FIT_SAMPLE_CAP = 200_000
_CHUNK = 16384


@dataclass
class PixelFeatures:
    """Per-pixel mixed features for one image, flattened row-major."""

    numeric: np.ndarray      # (N, 3) float
    bits: np.ndarray         # (N, BRIEF_BITS) uint8 in {0, 1}
    image_shape: tuple       # (H, W)

    def __post_init__(self):
        if self.numeric.shape[0] != self.bits.shape[0]:
            raise InvalidInputError("numeric and bit features must align")
        if self.bits.shape[1] != BRIEF_BITS:
            raise InvalidInputError(f"bit vectors must have length {BRIEF_BITS}")

    @property
    def count(self) -> int:
        return self.numeric.shape[0]


@dataclass
class ClusterModel:
    """Fitted k-prototypes centers with per-pixel labels."""

    centers_numeric: np.ndarray   # (k, 3)
    centers_bits: np.ndarray      # (k, BRIEF_BITS) uint8
    labels: np.ndarray            # (N,) int32
    gamma: float
    k: int
    cost_history: list = field(default_factory=list)

    def label_map(self, image_shape) -> np.ndarray:
        return self.labels.reshape(image_shape)


def pca_channels(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project RGB onto covariance eigenvectors (descending eigenvalue).

    Returns the (H, W, 3) decorrelated channels and the (3, 3) component
    matrix whose rows are the eigenvectors. Eigenvector signs are fixed so
    the largest-magnitude entry is positive (deterministic across runs).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidInputError("pca_channels expects an RGB image")
    flat = image.reshape(-1, 3)
    centered = flat - flat.mean(axis=0)
    cov = centered.T @ centered / flat.shape[0]
    if np.allclose(cov, 0.0):
        raise DegenerateInputError("constant image has no principal components")
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    components = eigvecs[:, order].T
    for i in range(3):
        if components[i, np.argmax(np.abs(components[i]))] < 0:
            components[i] = -components[i]
    projected = centered @ components.T
    return projected.reshape(image.shape), components


def brief_pairs(seed: int):
    """Seed-determined comparison point pairs for each scale.

    Offsets are uniform over the centered window; the same pairs are shared
    by every pixel of a scale.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for bits, window, _sigma in BRIEF_SCALES:
        half = window // 2
        pairs.append(rng.integers(-half, half + 1, size=(bits, 2, 2)))
    return pairs


def brief_features(channel: np.ndarray, seed: int = 0) -> np.ndarray:
    """(N, 160) binary descriptors: three scales of smoothed point comparisons.

    bit = 1 iff the blurred intensity at the first point is strictly less
    than at the second (ties give 0). Borders use mirrored extension.
    """
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 2:
        raise InvalidInputError("brief_features expects a single-channel grid")
    h, w = channel.shape
    largest = max(s[1] for s in BRIEF_SCALES)
    if h <= largest or w <= largest:
        raise InvalidInputError(f"channel must exceed the largest window ({largest}px)")
    all_pairs = brief_pairs(seed)
    out = np.empty((h * w, BRIEF_BITS), dtype=np.uint8)
    col = 0
    for (bits, window, sigma), pairs in zip(BRIEF_SCALES, all_pairs):
        smoothed = gaussian_blur(channel, sigma)
        half = window // 2
        padded = np.pad(smoothed, half, mode="reflect")
        for (dy1, dx1), (dy2, dx2) in pairs:
            a = padded[half + dy1:half + dy1 + h, half + dx1:half + dx1 + w]
            b = padded[half + dy2:half + dy2 + h, half + dx2:half + dx2 + w]
            out[:, col] = (a < b).ravel()
            col += 1
    return out


def extract_features(image: np.ndarray, seed: int = 0) -> PixelFeatures:
    """PCA color channels + BRIEF bits on the first principal channel."""
    channels, _ = pca_channels(image)
    bits = brief_features(channels[..., 0], seed=seed)
    return PixelFeatures(numeric=channels.reshape(-1, 3), bits=bits,
                         image_shape=image.shape[:2])


def mixed_distance(numeric_a, bits_a, numeric_b, bits_b, gamma: float) -> np.ndarray:
    """Squared Euclidean on numeric parts plus gamma-weighted Hamming on bits."""
    numeric_a = np.asarray(numeric_a, dtype=np.float64)
    numeric_b = np.asarray(numeric_b, dtype=np.float64)
    bits_a = np.asarray(bits_a)
    bits_b = np.asarray(bits_b)
    if bits_a.shape[-1] != bits_b.shape[-1]:
        raise InvalidInputError("bit vectors must have equal length")
    num = np.sum((numeric_a - numeric_b) ** 2, axis=-1)
    ham = np.sum(bits_a != bits_b, axis=-1)
    return num + gamma * ham


def default_gamma(features: PixelFeatures) -> float:
    """Mean numeric-attribute standard deviation over the bit-vector length."""
    if features.count < 2:
        raise InvalidInputError("need at least two pixels to set gamma")
    stds = features.numeric.std(axis=0)
    return float(stds.mean() / features.bits.shape[1])


def _embed(numeric: np.ndarray, bits: np.ndarray, gamma: float) -> np.ndarray:
    scale = np.sqrt(gamma)
    return np.hstack([numeric, bits.astype(np.float64) * scale])


def _min_sq_dist_to(x: np.ndarray, center: np.ndarray, current: np.ndarray) -> np.ndarray:
    d = np.sum((x - center) ** 2, axis=1)
    return np.minimum(current, d)


def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-center labels and distances, chunked to bound memory."""
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int32)
    dists = np.empty(n, dtype=np.float64)
    sq_c = np.sum(centers**2, axis=1)
    for start in range(0, n, _CHUNK):
        chunk = x[start:start + _CHUNK]
        d = np.sum(chunk**2, axis=1)[:, None] - 2.0 * chunk @ centers.T + sq_c[None, :]
        labels[start:start + _CHUNK] = np.argmin(d, axis=1)
        dists[start:start + _CHUNK] = np.take_along_axis(
            d, labels[start:start + _CHUNK, None].astype(np.intp), axis=1
        ).ravel()
    return labels, np.maximum(dists, 0.0)


def _seed_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; returns the chosen row indices.

    The first center is uniform (rng.integers(n)); each next is drawn with
    probability proportional to the squared distance to the nearest chosen
    center (rng.choice(n, p=d2/d2.sum())).
    """
    n = x.shape[0]
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = int(rng.integers(n))
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            chosen[i] = int(rng.integers(n))
        else:
            chosen[i] = int(rng.choice(n, p=d2 / total))
        d2 = _min_sq_dist_to(x, x[chosen[i]], d2)
    return chosen


def _update_centers(numeric, bits, labels, k, old_numeric, old_bits):
    """Numeric means and per-bit majorities per cluster; empty clusters keep
    their previous center and are reported back."""
    centers_numeric = old_numeric.copy()
    centers_bits = old_bits.copy()
    counts = np.bincount(labels, minlength=k)
    for j in range(k):
        if counts[j] == 0:
            continue
        members = labels == j
        centers_numeric[j] = numeric[members].mean(axis=0)
        centers_bits[j] = (bits[members].mean(axis=0) > 0.5).astype(np.uint8)
    return centers_numeric, centers_bits, np.flatnonzero(counts == 0)


def kprototypes_fit(features: PixelFeatures, k: int, gamma: float, seed: int = 0,
                    max_iter: int = 50, sample_cap: int = FIT_SAMPLE_CAP) -> ClusterModel:
    """Alternating assignment / center-update clustering on mixed features.

    Centers are fitted on at most sample_cap randomly chosen pixels, then all
    pixels are assigned to the fitted centers. Deterministic given the seed.
    Empty clusters are re-seeded from the point farthest from its center.
    """
    n = features.count
    if k > n:
        raise InvalidInputError(f"k={k} exceeds pixel count {n}")
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if gamma < 0:
        raise InvalidInputError("gamma must be non-negative")
    rng = np.random.default_rng(seed)

    if n > sample_cap:
        fit_idx = rng.choice(n, size=sample_cap, replace=False)
        fit_idx.sort()
    else:
        fit_idx = np.arange(n)
    numeric = features.numeric[fit_idx]
    bits = features.bits[fit_idx]
    x = _embed(numeric, bits, gamma)

    seed_idx = _seed_centers(x, k, rng)
    centers_numeric = numeric[seed_idx].copy()
    centers_bits = bits[seed_idx].copy()

    cost_history = []
    labels = None
    for _ in range(max_iter):
        centers = _embed(centers_numeric, centers_bits, gamma)
        labels_new, dists = _assign(x, centers)
        cost_history.append(float(dists.sum()))
        if labels is not None and np.array_equal(labels, labels_new):
            break
        labels = labels_new
        centers_numeric, centers_bits, empty = _update_centers(
            numeric, bits, labels_new, k, centers_numeric, centers_bits)
        if empty.size:
            farthest = np.argsort(dists)[::-1]
            for e, src in zip(empty, farthest):
                centers_numeric[e] = numeric[src]
                centers_bits[e] = bits[src]

    full_labels, full_dists = _assign(_embed(features.numeric, features.bits, gamma),
                                      _embed(centers_numeric, centers_bits, gamma))
    # A cluster can come out empty only if max_iter ran out mid-update; grab
    # the farthest point so every cluster index is populated.
    counts = np.bincount(full_labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        src = int(np.argmax(full_dists))
        full_labels[src] = j
        full_dists[src] = 0.0
    return ClusterModel(centers_numeric=centers_numeric, centers_bits=centers_bits,
                        labels=full_labels, gamma=gamma, k=k, cost_history=cost_history)


def model_cost(model: ClusterModel, features: PixelFeatures) -> float:
    """Total mixed distance of every pixel to its assigned center."""
    d = mixed_distance(features.numeric, features.bits,
                       model.centers_numeric[model.labels],
                       model.centers_bits[model.labels], model.gamma)
    return float(np.sum(d))


def labels_palette(labels: np.ndarray, seed: int = 0) -> np.ndarray:
    """Distinct-color visualization of a label map, for inspection output."""
    rng = np.random.default_rng(seed)
    k = int(labels.max()) + 1
    palette = rng.integers(40, 256, size=(k, 3), dtype=np.uint8)
    return palette[labels]
