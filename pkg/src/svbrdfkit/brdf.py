"""Simplified Disney-style BRDF: Fresnel-weighted diffuse lobe plus an
anisotropic GGX specular lobe. Subsurface, clearcoat and sheen are omitted.

Every function broadcasts: parameters may be scalars or per-pixel maps, and
direction arguments may be single 3-vectors or (..., 3) arrays.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

ALPHA_FLOOR = 0.001


@dataclass
class DisneyParams:
    """Bounded material parameters; metallic is a hard 0/1 tag, never fitted."""

    base_color: np.ndarray  # RGB in [0, 1]^3
    metallic: int
    specular: float
    specular_tint: float
    roughness: float
    anisotropic: float
    aniso_axis: float = 0.0

    def validate(self):
        bc = np.asarray(self.base_color)
        if bc.shape[-1] != 3 or np.any(bc < 0) or np.any(bc > 1):
            raise InvalidInputError("base_color must be RGB in [0,1]^3")
        if not np.all(np.isin(np.asarray(self.metallic), (0, 1))):
            raise InvalidInputError("metallic must be 0 or 1")
        for name in ("specular", "specular_tint", "roughness", "anisotropic", "aniso_axis"):
            v = np.asarray(getattr(self, name))
            if np.any(v < 0) or np.any(v > 1):
                raise InvalidInputError(f"{name} must lie in [0,1]")


@dataclass
class ShadingFrame:
    """Orthonormal (n, t, b) basis with b = n x t."""

    n: np.ndarray
    t: np.ndarray
    b: np.ndarray

    @classmethod
    def from_normal_tangent(cls, n, t) -> "ShadingFrame":
        n = np.asarray(n, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        return cls(n=n, t=t, b=np.cross(n, t))


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def eval_disney(params: DisneyParams, frame: ShadingFrame, l, v) -> np.ndarray:
    """Evaluate the BRDF for light/view unit directions l, v; returns (..., 3).

    Directions below the hemisphere of n give zero reflectance instead of an
    error so that renderers can clamp rather than branch.
    """
    l = np.asarray(l, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n, t, b = frame.n, frame.t, frame.b

    h = l + v
    h_norm = np.linalg.norm(h, axis=-1, keepdims=True)
    h = h / np.where(h_norm > 0, h_norm, 1.0)

    l_n = _dot(l, n)
    v_n = _dot(v, n)
    mask = (l_n > 0) & (v_n > 0)

    l_h = _dot(l, h)
    h_n = _dot(h, n)
    h_t = _dot(h, t)
    h_b = _dot(h, b)
    l_t = _dot(l, t)
    l_b = _dot(l, b)
    v_t = _dot(v, t)
    v_b = _dot(v, b)

    base_color = np.asarray(params.base_color, dtype=np.float64)
    metallic = np.asarray(params.metallic, dtype=np.float64)
    specular = np.asarray(params.specular, dtype=np.float64)
    specular_tint = np.asarray(params.specular_tint, dtype=np.float64)
    roughness = np.asarray(params.roughness, dtype=np.float64)
    anisotropic = np.asarray(params.anisotropic, dtype=np.float64)

    # Diffuse lobe with the retro-reflective grazing boost.
    fd90 = 0.5 + 2.0 * l_h**2 * roughness
    schlick_l = (1.0 - l_n) ** 5
    schlick_v = (1.0 - v_n) ** 5
    f_diff = (
        base_color
        * (1.0 - metallic)[..., None]
        / np.pi
        * ((1.0 + (fd90 - 1.0) * schlick_l) * (1.0 + (fd90 - 1.0) * schlick_v))[..., None]
    )

    # Specular color: tint blends toward the base-color hue; black base colors
    # would divide by zero, so they fall back to an untinted (white) hue.
    luminance = base_color @ np.array([0.3, 0.6, 0.1])
    c_tint = np.where(luminance[..., None] > 1e-6,
                      base_color / np.where(luminance[..., None] > 1e-6, luminance[..., None], 1.0),
                      1.0)
    c_nonmetal = 0.08 * specular[..., None] * (
        c_tint * specular_tint[..., None] + (1.0 - specular_tint)[..., None]
    )
    c_spec = c_nonmetal * (1.0 - metallic)[..., None] + base_color * metallic[..., None]

    aspect = np.sqrt(1.0 - 0.9 * anisotropic)
    alpha_x = np.maximum(ALPHA_FLOOR, roughness**2 / aspect)
    alpha_y = np.maximum(ALPHA_FLOOR, roughness**2 * aspect)

    # inside the hemisphere h is never zero, so the guarded branch only
    # covers masked-out direction pairs
    d_denom = np.pi * alpha_x * alpha_y * ((h_t / alpha_x) ** 2 + (h_b / alpha_y) ** 2 + h_n**2) ** 2
    d_s = 1.0 / np.where(mask, d_denom, 1.0)

    schlick_h = (1.0 - l_h) ** 5
    f_s = (1.0 - schlick_h)[..., None] * c_spec + schlick_h[..., None]

    g_denom_l = l_n + np.sqrt((alpha_x * l_t) ** 2 + (alpha_y * l_b) ** 2 + l_n**2)
    g_denom_v = v_n + np.sqrt((alpha_x * v_t) ** 2 + (alpha_y * v_b) ** 2 + v_n**2)
    g_denom = np.where(mask, g_denom_l * g_denom_v, 1.0)
    g_s = 1.0 / g_denom

    f_spec = (d_s * g_s)[..., None] * f_s
    out = np.where(mask[..., None], f_diff + f_spec, 0.0)
    return out


def tangent_from_axis(n, aniso_axis) -> np.ndarray:
    """Tangent with azimuth phi_t = 2*pi*aniso_axis, solved to satisfy n.t = 0.

    n may be a single unit normal or an (..., 3) field; aniso_axis broadcasts.
    Requires n_z > 0 (near-planar material).
    """
    n = np.asarray(n, dtype=np.float64)
    if np.any(n[..., 2] <= 0):
        raise InvalidInputError("tangent solve requires normals with positive z")
    phi = np.asarray(aniso_axis, dtype=np.float64) * 2.0 * np.pi
    cos_phi = np.cos(phi)
    sin_phi = np.sin(phi)
    a = n[..., 0] * cos_phi + n[..., 1] * sin_phi
    norm = np.sqrt(a**2 + n[..., 2] ** 2)
    sin_theta = n[..., 2] / norm
    cos_theta = -a / norm
    return np.stack([sin_theta * cos_phi, sin_theta * sin_phi, cos_theta], axis=-1)


def lambertian_reference() -> float:
    """BRDF of an 18% gray card: 0.18 / pi, independent of directions."""
    return 0.18 / np.pi
