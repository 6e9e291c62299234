"""Inverse-rendering core: point-light forward renderer, cross-entropy global
roughness fit, per-cluster bounded parameter fits, and the iterative
blur-and-refit driver.

Each driver iteration updates, in order: the height/normal maps (from the
ambient image and the previous base-color estimate), the global roughness
(the only spatially-uniform free parameter; metallic is a hand tag), and the
per-cluster spatially varying parameters. svBRDF maps are then Gaussian
blurred and their per-cluster means seed the next iteration's optimizers.
The returned solution holds the last fitted (pre-blur) maps.
"""

import json
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import clustering
from .brdf import DisneyParams, ShadingFrame, eval_disney, tangent_from_axis
from .errors import FitError, InvalidInputError
from .geometry import SceneGeometry, image_plane_grid, incident_geometry
from .heightfield import DEFAULT_RADII, multiscale_depth, normals_from_depth, shading_image
from .imageops import gaussian_blur, grayscale

_REFERENCE_RES = 256.0


@dataclass
class MaterialSolution:
    """Per-pixel parameter maps plus the global scalars."""

    base_color: np.ndarray      # (H, W, 3)
    specular: np.ndarray        # (H, W)
    specular_tint: np.ndarray   # (H, W)
    anisotropic: np.ndarray     # (H, W)
    aniso_axis: np.ndarray      # (H, W)
    normals: np.ndarray         # (H, W, 3)
    tangents: np.ndarray        # (H, W, 3)
    roughness: float
    metallic: int
    labels: np.ndarray = None   # (H, W) int32
    height: np.ndarray = None   # (H, W)

    @property
    def shape(self) -> tuple:
        return self.base_color.shape[:2]

    def sv_maps(self) -> dict:
        return {
            "base_color": self.base_color,
            "specular": self.specular,
            "specular_tint": self.specular_tint,
            "anisotropic": self.anisotropic,
            "aniso_axis": self.aniso_axis,
        }

    def copy(self) -> "MaterialSolution":
        return MaterialSolution(
            base_color=self.base_color.copy(), specular=self.specular.copy(),
            specular_tint=self.specular_tint.copy(), anisotropic=self.anisotropic.copy(),
            aniso_axis=self.aniso_axis.copy(), normals=self.normals.copy(),
            tangents=self.tangents.copy(), roughness=self.roughness,
            metallic=self.metallic,
            labels=None if self.labels is None else self.labels.copy(),
            height=None if self.height is None else self.height.copy(),
        )

    @classmethod
    def initial(cls, ambient: np.ndarray, metallic: int,
                labels: np.ndarray = None) -> "MaterialSolution":
        """Start of the fit: base color = ambient photo, specular = roughness
        = 0.5, everything else 0, flat upward normals."""
        ambient = np.asarray(ambient, dtype=np.float64)
        h, w = ambient.shape[:2]
        normals = np.zeros((h, w, 3))
        normals[..., 2] = 1.0
        tangents = np.zeros((h, w, 3))
        tangents[..., 0] = 1.0
        return cls(
            base_color=ambient.copy(), specular=np.full((h, w), 0.5),
            specular_tint=np.zeros((h, w)), anisotropic=np.zeros((h, w)),
            aniso_axis=np.zeros((h, w)), normals=normals, tangents=tangents,
            roughness=0.5, metallic=int(metallic), labels=labels,
        )


@dataclass
class FitConfig:
    """Driver knobs; schedules default to the exponentially decreasing ones."""

    n_iters: int = 5
    k: int = clustering.DEFAULT_K
    gamma_scale: float = 1.0
    height_sigma: float = 0.5
    huber_delta: float = 0.1
    seed: int = 0
    radii: tuple = DEFAULT_RADII
    blur_sigmas: tuple = None    # pixels at 256x256; scaled with resolution
    tolerances: tuple = None
    param_bounds: tuple = (0.0, 1.0)
    roughness_bounds: tuple = (0.001, 1.0)

    def __post_init__(self):
        if self.n_iters < 1:
            raise InvalidInputError("n_iters must be >= 1")
        if self.blur_sigmas is None:
            self.blur_sigmas = tuple(16.0 * 2.0 ** (1 - i) for i in range(1, self.n_iters + 1))
        if self.tolerances is None:
            ladder = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)  # floors at 1e-6
            self.tolerances = tuple(ladder[min(i, len(ladder) - 1)]
                                    for i in range(self.n_iters))
        if len(self.blur_sigmas) != self.n_iters or len(self.tolerances) != self.n_iters:
            raise InvalidInputError("schedules must have n_iters entries")
        if any(s2 >= s1 for s1, s2 in zip(self.blur_sigmas, self.blur_sigmas[1:])):
            raise InvalidInputError("blur sigma schedule must be strictly decreasing")


class PixelGeometry:
    """Per-pixel lighting geometry for a fixed scene; normals vary per stage."""

    def __init__(self, height: int, width: int, geom: SceneGeometry):
        points = image_plane_grid(height, width, geom.pixel_pitch)
        up = np.array([0.0, 0.0, 1.0])
        self.omega_i, self.omega_o, r, _ = incident_geometry(points, geom, up)
        self.falloff = geom.light_intensity / r**2

    def radiance(self, params: DisneyParams, normals, tangents) -> np.ndarray:
        frame = ShadingFrame.from_normal_tangent(normals, tangents)
        f = eval_disney(params, frame, self.omega_i, self.omega_o)
        cos_i = np.maximum(np.sum(normals * self.omega_i, axis=-1), 0.0)
        return f * (self.falloff * cos_i)[..., None]


def render_forward(solution: MaterialSolution, geom: SceneGeometry) -> np.ndarray:
    """Point-light radiance L = f * E / r^2 * max(cos theta_i, 0) per pixel."""
    h, w = solution.shape
    pix = PixelGeometry(h, w, geom)
    params = DisneyParams(
        base_color=solution.base_color, metallic=solution.metallic,
        specular=solution.specular, specular_tint=solution.specular_tint,
        roughness=solution.roughness, anisotropic=solution.anisotropic,
        aniso_axis=solution.aniso_axis)
    return pix.radiance(params, solution.normals, solution.tangents)


def pseudo_huber(residual, delta: float) -> np.ndarray:
    """Smooth robust loss: quadratic near zero, linear in the tails."""
    if delta <= 0:
        raise InvalidInputError("pseudo-Huber delta must be positive")
    residual = np.asarray(residual, dtype=np.float64)
    return delta**2 * (np.sqrt(1.0 + (residual / delta) ** 2) - 1.0)


def cross_entropy(target_dist: np.ndarray, rendered: np.ndarray) -> float:
    """-sum(t * log(r_hat)) between grayscale maps normalized to sum 1."""
    gray = grayscale(rendered)
    total = gray.sum()
    if total <= 0:
        return float(np.inf)
    return float(-np.sum(target_dist * np.log(np.maximum(gray / total, 1e-300))))


def _target_distribution(target: np.ndarray) -> np.ndarray:
    gray = grayscale(target)
    total = gray.sum()
    if total <= 0:
        raise InvalidInputError("target radiance has no energy")
    return gray / total


def fit_global_roughness(solution: MaterialSolution, target: np.ndarray,
                         geom: SceneGeometry, tol: float = 1e-6,
                         bounds: tuple = (0.001, 1.0)) -> float:
    """Minimize the cross entropy between normalized grayscale radiance
    distributions over the single bounded roughness scalar (L-BFGS-B,
    central-difference gradient)."""
    h, w = solution.shape
    pix = PixelGeometry(h, w, geom)
    target_dist = _target_distribution(target)

    def objective(x):
        params = DisneyParams(
            base_color=solution.base_color, metallic=solution.metallic,
            specular=solution.specular, specular_tint=solution.specular_tint,
            roughness=float(x[0]), anisotropic=solution.anisotropic,
            aniso_axis=solution.aniso_axis)
        return cross_entropy(target_dist, pix.radiance(params, solution.normals,
                                                       solution.tangents))

    res = minimize(objective, x0=[solution.roughness], method="L-BFGS-B",
                   jac="3-point", bounds=[bounds], options={"ftol": tol})
    if not res.success and "ABNORMAL" in str(res.message).upper():
        raise FitError(f"global roughness fit failed: {res.message}")
    return float(res.x[0])


def fit_cluster_params(cluster_id: int, solution: MaterialSolution, target: np.ndarray,
                       geom: SceneGeometry, tol: float = 1e-6, huber_delta: float = 0.1,
                       x0: np.ndarray = None):
    """Fit the 7 spatially varying scalars of one cluster.

    Minimizes the mean over cluster pixels of the channel-summed pseudo-Huber
    radiance residual; all scalars bounded to [0, 1]. Tangents are re-derived
    from each pixel's own normal and the candidate anisotropy axis. Returns
    (params, success flag, objective); on optimizer failure the previous
    values are returned with success=False.
    """
    if solution.labels is None:
        raise InvalidInputError("solution has no cluster labels")
    mask = solution.labels == cluster_id
    if not np.any(mask):
        raise InvalidInputError(f"cluster {cluster_id} is empty")
    h, w = solution.shape
    pix = PixelGeometry(h, w, geom)

    omega_i = pix.omega_i[mask]
    omega_o = pix.omega_o[mask]
    normals = solution.normals[mask]
    weight = pix.falloff[mask] * np.maximum(np.sum(normals * omega_i, axis=-1), 0.0)
    target_px = np.asarray(target, dtype=np.float64)[mask]

    if x0 is None:
        x0 = np.array([*solution.base_color[mask].mean(axis=0),
                       solution.specular[mask].mean(),
                       solution.specular_tint[mask].mean(),
                       solution.anisotropic[mask].mean(),
                       solution.aniso_axis[mask].mean()])
    x0 = np.clip(np.asarray(x0, dtype=np.float64), 0.0, 1.0)

    def objective(x):
        params = DisneyParams(base_color=x[:3], metallic=solution.metallic,
                              specular=x[3], specular_tint=x[4],
                              roughness=solution.roughness, anisotropic=x[5],
                              aniso_axis=x[6])
        tangents = tangent_from_axis(normals, x[6])
        frame = ShadingFrame.from_normal_tangent(normals, tangents)
        rendered = eval_disney(params, frame, omega_i, omega_o) * weight[:, None]
        loss = pseudo_huber(rendered - target_px, huber_delta)
        return float(loss.sum(axis=-1).mean())

    def attempt(x_start):
        res = minimize(objective, x0=x_start, method="L-BFGS-B", jac="3-point",
                       bounds=[(0.0, 1.0)] * 7, options={"ftol": tol})
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            return None, np.inf
        return np.clip(res.x, 0.0, 1.0), float(res.fun)

    f0 = objective(x0)
    best_x, best_fun = attempt(x0)

    # The axis has zero gradient while anisotropic sits at 0, so an isotropic
    # start can't discover an anisotropic material: if the first run left
    # anisotropy unexplored and residual on the table, retry from the most
    # promising of four axis orientations.
    if best_x is not None and best_fun > 1e-8 and best_x[5] < 0.05:
        candidates = []
        for axis in (0.0625, 0.1875, 0.3125, 0.4375):
            probe = best_x.copy()
            probe[5] = 0.35
            probe[6] = axis
            candidates.append((objective(probe), probe))
        retry_x, retry_fun = attempt(min(candidates, key=lambda c: c[0])[1])
        if retry_x is not None and retry_fun < best_fun:
            best_x, best_fun = retry_x, retry_fun

    if best_x is None or best_fun > f0:
        return x0, False, f0
    return best_x, True, best_fun


def cluster_means(solution: MaterialSolution, k: int) -> np.ndarray:
    """(k, 7) per-cluster means of the sv parameter maps."""
    labels = solution.labels.ravel()
    counts = np.maximum(np.bincount(labels, minlength=k), 1)
    means = np.empty((k, 7))
    flat_maps = [solution.base_color[..., 0], solution.base_color[..., 1],
                 solution.base_color[..., 2], solution.specular,
                 solution.specular_tint, solution.anisotropic, solution.aniso_axis]
    for col, grid in enumerate(flat_maps):
        means[:, col] = np.bincount(labels, weights=grid.ravel(), minlength=k) / counts
    return means


def blur_and_reseed(solution: MaterialSolution, sigma_blur: float):
    """Gaussian-blur the sv maps; per-cluster means of the blurred maps become
    the next iteration's optimizer starting points."""
    if sigma_blur < 0:
        raise InvalidInputError("blur sigma must be non-negative")
    blurred = solution.copy()
    blurred.base_color = gaussian_blur(solution.base_color, sigma_blur)
    blurred.specular = gaussian_blur(solution.specular, sigma_blur)
    blurred.specular_tint = gaussian_blur(solution.specular_tint, sigma_blur)
    blurred.anisotropic = gaussian_blur(solution.anisotropic, sigma_blur)
    blurred.aniso_axis = gaussian_blur(solution.aniso_axis, sigma_blur)
    k = int(solution.labels.max()) + 1 if solution.labels is not None else 0
    inits = cluster_means(blurred, k) if k else None
    return blurred, inits


class _DiagWriter:
    def __init__(self, path):
        self.fh = open(path, "w") if path else None

    def emit(self, **record):
        if self.fh:
            self.fh.write(json.dumps(record) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


def _dump_maps(solution: MaterialSolution, dump_dir, iteration: int):
    from . import imgio
    from pathlib import Path
    out = Path(dump_dir) / f"iter_{iteration:02d}"
    out.mkdir(parents=True, exist_ok=True)
    imgio.save_png16(out / "baseColor.png", solution.base_color)
    imgio.save_png16(out / "specular.png", solution.specular)
    imgio.save_png16_signed(out / "normal.png", solution.normals)
    if solution.height is not None:
        imgio.save_exr(out / "height.exr", solution.height)


def run_pipeline(ambient: np.ndarray, target: np.ndarray, geom: SceneGeometry,
                 config: FitConfig, metallic_tag: int,
                 diag_path=None, dump_dir=None) -> MaterialSolution:
    """Full material fit: cluster once, then iterate height -> global
    roughness -> per-cluster parameters -> blur/reseed for n_iters rounds."""
    ambient = np.asarray(ambient, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if ambient.shape[:2] != target.shape[:2]:
        raise InvalidInputError("ambient and target dimensions differ")
    h, w = ambient.shape[:2]
    diag = _DiagWriter(diag_path)
    res_scale = np.sqrt(h * w) / _REFERENCE_RES

    try:
        t0 = time.perf_counter()
        features = clustering.extract_features(ambient, seed=config.seed)
        gamma = clustering.default_gamma(features) * config.gamma_scale
        model = clustering.kprototypes_fit(features, config.k, gamma, seed=config.seed)
        labels = model.label_map((h, w))
        diag.emit(iteration=0, stage="clustering", k=config.k, gamma=gamma,
                  cost=model.cost_history[-1] if model.cost_history else None,
                  wall_time_s=time.perf_counter() - t0)

        solution = MaterialSolution.initial(ambient, metallic_tag, labels=labels)
        inits = cluster_means(solution, config.k)

        for it in range(config.n_iters):
            t_it = time.perf_counter()
            shading = shading_image(ambient, solution.base_color)
            field = multiscale_depth(shading, config.radii, config.height_sigma)
            solution.height = field.depth
            solution.normals = normals_from_depth(field)
            solution.tangents = tangent_from_axis(solution.normals, solution.aniso_axis)
            diag.emit(iteration=it + 1, stage="height",
                      depth_rms=float(np.sqrt(np.mean(field.depth**2))),
                      wall_time_s=time.perf_counter() - t_it)

            t_g = time.perf_counter()
            try:
                solution.roughness = fit_global_roughness(
                    solution, target, geom, tol=config.tolerances[it],
                    bounds=config.roughness_bounds)
            except FitError as exc:
                raise FitError(f"iteration {it + 1}, global stage: {exc}") from exc
            diag.emit(iteration=it + 1, stage="global", roughness=solution.roughness,
                      wall_time_s=time.perf_counter() - t_g)

            t_c = time.perf_counter()
            objectives = []
            failed = []
            for j in range(config.k):
                params, ok, fun = fit_cluster_params(
                    j, solution, target, geom, tol=config.tolerances[it],
                    huber_delta=config.huber_delta, x0=inits[j])
                objectives.append(fun)
                if not ok:
                    failed.append(j)
                mask = solution.labels == j
                solution.base_color[mask] = params[:3]
                solution.specular[mask] = params[3]
                solution.specular_tint[mask] = params[4]
                solution.anisotropic[mask] = params[5]
                solution.aniso_axis[mask] = params[6]
            solution.tangents = tangent_from_axis(solution.normals, solution.aniso_axis)
            diag.emit(iteration=it + 1, stage="clusters",
                      mean_objective=float(np.mean(objectives)), failed=failed,
                      wall_time_s=time.perf_counter() - t_c)

            if dump_dir is not None:
                _dump_maps(solution, dump_dir, it + 1)

            # The blur only exists to seed the next round; the final solution
            # keeps the last fitted maps.
            if it + 1 < config.n_iters:
                solution, inits = blur_and_reseed(solution,
                                                  config.blur_sigmas[it] * res_scale)
        return solution
    finally:
        diag.close()
