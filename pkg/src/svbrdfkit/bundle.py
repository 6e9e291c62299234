"""svBRDF bundle on disk: parameter textures, bump maps, globals, metadata.

Layout of an exported bundle directory:
    baseColor.png, specular.png, specularTint.png, anisotropic.png,
    anisoAxis.png        16-bit PNG, value = round(x * 65535)
    normal.png, tangent.png   16-bit PNG, (v + 1) / 2 encoding
    height.exr           32-bit float EXR
    labels.png           16-bit PNG cluster indices (+ labels_palette.png)
    material.json        globals (roughness, metallic), scene scale, version
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imgio
from .clustering import labels_palette
from .errors import InvalidInputError
from .fitting import MaterialSolution, render_forward
from .geometry import SceneGeometry
from .radiometry import ResponseCurve

BUNDLE_VERSION = 1


@dataclass
class SvbrdfBundle:
    """A fitted material plus the scene scale needed to re-render it."""

    solution: MaterialSolution
    light_intensity: float
    light_pos: np.ndarray
    pixel_pitch: float
    r_perp: float
    version: int = BUNDLE_VERSION

    def geometry(self, light_pos=None, light_intensity=None) -> SceneGeometry:
        """Capture geometry, optionally with a novel light placement."""
        return SceneGeometry(
            light_pos=np.asarray(self.light_pos if light_pos is None else light_pos,
                                 dtype=np.float64),
            pixel_pitch=self.pixel_pitch, r_perp=self.r_perp,
            light_intensity=self.light_intensity if light_intensity is None
            else light_intensity)


def export_bundle(bundle: SvbrdfBundle, out_dir) -> Path:
    """Write every map and the metadata sidecar; creates out_dir if needed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sol = bundle.solution
    imgio.save_png16(out / "baseColor.png", sol.base_color)
    imgio.save_png16(out / "specular.png", sol.specular)
    imgio.save_png16(out / "specularTint.png", sol.specular_tint)
    imgio.save_png16(out / "anisotropic.png", sol.anisotropic)
    imgio.save_png16(out / "anisoAxis.png", sol.aniso_axis)
    imgio.save_png16_signed(out / "normal.png", sol.normals)
    imgio.save_png16_signed(out / "tangent.png", sol.tangents)
    if sol.height is not None:
        imgio.save_exr(out / "height.exr", sol.height)
    if sol.labels is not None:
        imgio.save_labels(out / "labels.png", sol.labels)
        imgio.save_image_u8(out / "labels_palette.png", labels_palette(sol.labels))
    h, w = sol.shape
    meta = {
        "version": bundle.version,
        "roughness": float(sol.roughness),
        "metallic": int(sol.metallic),
        "light_intensity": float(bundle.light_intensity),
        "light_pos": [float(v) for v in np.asarray(bundle.light_pos)],
        "pixel_pitch": float(bundle.pixel_pitch),
        "r_perp": float(bundle.r_perp),
        "resolution": [int(h), int(w)],
    }
    with open(out / "material.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    return out


def load_bundle(bundle_dir) -> SvbrdfBundle:
    """Inverse of export_bundle (maps come back within quantization)."""
    path = Path(bundle_dir)
    meta_path = path / "material.json"
    if not meta_path.exists():
        raise InvalidInputError(f"not a bundle directory (no material.json): {path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    for key in ("version", "roughness", "metallic", "light_intensity",
                "light_pos", "pixel_pitch", "r_perp", "resolution"):
        if key not in meta:
            raise InvalidInputError(f"bundle metadata missing field '{key}'")

    height_path = path / "height.exr"
    labels_path = path / "labels.png"
    solution = MaterialSolution(
        base_color=imgio.load_png16(path / "baseColor.png"),
        specular=imgio.load_png16(path / "specular.png"),
        specular_tint=imgio.load_png16(path / "specularTint.png"),
        anisotropic=imgio.load_png16(path / "anisotropic.png"),
        aniso_axis=imgio.load_png16(path / "anisoAxis.png"),
        normals=imgio.load_png16_signed(path / "normal.png"),
        tangents=imgio.load_png16_signed(path / "tangent.png"),
        roughness=float(meta["roughness"]),
        metallic=int(meta["metallic"]),
        labels=imgio.load_labels(labels_path) if labels_path.exists() else None,
        height=np.asarray(imgio.load_exr(height_path), dtype=np.float64)
        if height_path.exists() else None,
    )
    return SvbrdfBundle(
        solution=solution, light_intensity=float(meta["light_intensity"]),
        light_pos=np.asarray(meta["light_pos"], dtype=np.float64),
        pixel_pitch=float(meta["pixel_pitch"]), r_perp=float(meta["r_perp"]),
        version=int(meta["version"]))


def render_preview(bundle: SvbrdfBundle, geom: SceneGeometry, exposure: float,
                   curve: ResponseCurve) -> np.ndarray:
    """LDR preview: render radiance, then push it back through the camera.

    Pixel value = g^-1(ln(L * exposure)) clamped to [0, 255]; zero radiance
    maps to pixel value 0.
    """
    if exposure <= 0:
        raise InvalidInputError("exposure must be positive")
    radiance = render_forward(bundle.solution, geom)
    log_lt = np.log(np.maximum(radiance * exposure, 1e-300))
    out = np.empty(radiance.shape, dtype=np.float64)
    for c in range(3):
        out[..., c] = curve.invert(log_lt[..., c], c)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
