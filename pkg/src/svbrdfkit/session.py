"""Session configuration and loading: decode the capture set, build the scene
geometry, and produce the radiance map the fit will target.

Config documents are versioned JSON. Units: f35 in mm, r_perp in m,
exposures in seconds. Two input styles are supported:

  * photo style: "point_images" + "exposures" + "response_curve" +
    "calibration" (the gray-card record); the stack is MTB-aligned, merged
    into a radiance map, and E is rescaled from the calibration distance.
  * direct style: "radiance_map" (EXR) + "light_intensity" (+ optional
    "light_pos"), as produced by the synthetic generator.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imgio, radiometry
from .errors import CalibrationError, InvalidInputError
from .geometry import (CameraSpec, SceneGeometry, estimate_light_position,
                       pixel_pitch)
from .imageops import grayscale

CONFIG_VERSION = 1
CALIBRATION_VERSION = 1


@dataclass
class CalibrationRecord:
    """Gray-card calibration output: absolute intensity at a known distance."""

    e_gray: float
    r_gray: float
    exposures: list
    iso: object = None
    white_balance: object = None
    version: int = CALIBRATION_VERSION

    def save(self, path):
        with open(path, "w") as fh:
            json.dump({
                "version": self.version, "e_gray": self.e_gray,
                "r_gray": self.r_gray, "exposures": list(self.exposures),
                "iso": self.iso, "white_balance": self.white_balance,
            }, fh, indent=2)

    @classmethod
    def load(cls, path) -> "CalibrationRecord":
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"calibration record not found: {path}")
        with open(path) as fh:
            data = json.load(fh)
        for key in ("version", "e_gray", "r_gray", "exposures"):
            if key not in data:
                raise InvalidInputError(f"calibration record missing field '{key}'")
        return cls(e_gray=float(data["e_gray"]), r_gray=float(data["r_gray"]),
                   exposures=list(data["exposures"]), iso=data.get("iso"),
                   white_balance=data.get("white_balance"),
                   version=int(data["version"]))


_REQUIRED = ("version", "ambient_image", "f35", "r_perp")
_POSITIVE = ("f35", "r_perp")


@dataclass
class SessionConfig:
    """Validated session document; raw holds the parsed JSON."""

    path: Path
    raw: dict

    @classmethod
    def load(cls, config_path) -> "SessionConfig":
        config_path = Path(config_path)
        if not config_path.exists():
            raise InvalidInputError(f"config file not found: {config_path}")
        try:
            with open(config_path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config is not valid JSON: {exc}") from exc
        cfg = cls(path=config_path, raw=raw)
        cfg.validate()
        return cfg

    def resolve(self, rel) -> Path:
        return (self.path.parent / rel).expanduser()

    def validate(self):
        for key in _REQUIRED:
            if key not in self.raw:
                raise InvalidInputError(f"config missing required field '{key}'")
        if int(self.raw["version"]) != CONFIG_VERSION:
            raise InvalidInputError(
                f"unsupported config version {self.raw['version']} (expected {CONFIG_VERSION})")
        for key in _POSITIVE:
            value = self.raw[key]
            if not isinstance(value, (int, float)) or value <= 0:
                raise InvalidInputError(f"config field '{key}' must be a positive number")
        for key in ("k", "n_iters", "seed"):
            if key in self.raw and (not isinstance(self.raw[key], int) or self.raw[key] < 0):
                raise InvalidInputError(f"config field '{key}' must be a non-negative integer")
        for key in ("gamma_scale", "height_sigma", "light_intensity"):
            if key in self.raw and self.raw[key] <= 0:
                raise InvalidInputError(f"config field '{key}' must be positive")

        has_photos = "point_images" in self.raw
        has_direct = "radiance_map" in self.raw
        if has_photos == has_direct:
            raise InvalidInputError(
                "config must provide exactly one of 'point_images' or 'radiance_map'")
        if has_photos:
            for key in ("exposures", "response_curve", "calibration"):
                if key not in self.raw:
                    raise InvalidInputError(f"config missing required field '{key}'")
            if len(self.raw["point_images"]) == 0:
                raise InvalidInputError("config field 'point_images' is empty")
            if len(self.raw["exposures"]) != len(self.raw["point_images"]):
                raise InvalidInputError(
                    "exposure count does not match point image count")
            if any(t <= 0 for t in self.raw["exposures"]):
                raise InvalidInputError("exposures must be positive")
        else:
            if "light_intensity" not in self.raw:
                raise InvalidInputError("config missing required field 'light_intensity'")

    # File existence is checked when a workflow actually consumes the path:
    # calibrate-response must be able to run before curve.csv exists.
    def require_file(self, key) -> Path:
        if key not in self.raw:
            raise InvalidInputError(f"config missing required field '{key}'")
        path = self.resolve(self.raw[key])
        if not path.exists():
            raise InvalidInputError(f"file for '{key}' not found: {self.raw[key]}")
        return path

    def require_files(self, key) -> list:
        if key not in self.raw:
            raise InvalidInputError(f"config missing required field '{key}'")
        paths = [self.resolve(p) for p in self.raw[key]]
        for p, rel in zip(paths, self.raw[key]):
            if not p.exists():
                raise InvalidInputError(f"file for '{key}' not found: {rel}")
        return paths

    # Convenience accessors with pipeline defaults.
    def get(self, key, default=None):
        return self.raw.get(key, default)


@dataclass
class Session:
    """Everything the fit stage needs, decoded and calibrated."""

    config: SessionConfig
    ambient: np.ndarray        # (H, W, 3) float in [0, 1]
    radiance: np.ndarray       # (H, W, 3) float
    geometry: SceneGeometry
    camera: CameraSpec


def _load_ambient(cfg: SessionConfig) -> np.ndarray:
    path = cfg.require_file("ambient_image")
    if path.suffix.lower() == ".png":
        try:
            return imgio.load_png16(path)
        except InvalidInputError:
            pass
    return imgio.load_image_u8(path).astype(np.float64) / 255.0


def load_session(config_path) -> Session:
    """Decode images, align and merge the point stack, and scale E."""
    cfg = SessionConfig.load(config_path)
    ambient = _load_ambient(cfg)
    h, w = ambient.shape[:2]
    camera = CameraSpec(f35=float(cfg.raw["f35"]), image_width=w, image_height=h)
    delta = pixel_pitch(camera)

    if "radiance_map" in cfg.raw:
        radiance = np.asarray(imgio.load_exr(cfg.require_file("radiance_map")),
                              dtype=np.float64)
        intensity = float(cfg.raw["light_intensity"])
    else:
        curve = radiometry.ResponseCurve.load_csv(cfg.require_file("response_curve"))
        record = CalibrationRecord.load(cfg.require_file("calibration"))
        for key in ("iso", "white_balance"):
            if cfg.raw.get(key) is not None and record.__dict__[key] is not None \
                    and cfg.raw[key] != record.__dict__[key]:
                raise InvalidInputError(
                    f"session {key} ({cfg.raw[key]}) does not match calibration "
                    f"record ({record.__dict__[key]})")
        stack = radiometry.ExposureStack(
            images=[imgio.load_image_u8(p) for p in cfg.require_files("point_images")],
            exposures=[float(t) for t in cfg.raw["exposures"]])
        offsets = radiometry.mtb_align(stack, max_shift=int(cfg.get("max_align_shift", 16)))
        aligned = radiometry.apply_shifts(stack, offsets)
        radiance = radiometry.merge_radiance(aligned, curve)
        intensity = radiometry.scale_intensity(record.e_gray, record.r_gray,
                                               float(cfg.raw["r_perp"]))

    if radiance.shape[:2] != (h, w):
        raise InvalidInputError("ambient image and radiance map dimensions differ")

    light_pos = cfg.get("light_pos")
    if light_pos is None:
        light_pos = estimate_light_position(grayscale(radiance), camera, delta)
    else:
        light_pos = np.asarray(light_pos, dtype=np.float64)

    geom = SceneGeometry(light_pos=light_pos, pixel_pitch=delta,
                         r_perp=float(cfg.raw["r_perp"]), light_intensity=intensity)
    return Session(config=cfg, ambient=ambient, radiance=radiance,
                   geometry=geom, camera=camera)


def calibrate_response(cfg: SessionConfig) -> radiometry.ResponseCurve:
    """Color-card workflow: align the exposure stack, downsample each photo to
    the 20x15 tile grid, and solve the per-channel response curve."""
    paths = cfg.require_files("color_card_images")
    if "color_card_exposures" not in cfg.raw:
        raise InvalidInputError("config missing required field 'color_card_exposures'")
    exposures = [float(t) for t in cfg.raw["color_card_exposures"]]
    if len(paths) != len(exposures):
        raise InvalidInputError("color card image and exposure counts differ")
    if len(paths) < 2:
        raise InvalidInputError("response calibration needs at least two exposures")
    stack = radiometry.ExposureStack(
        images=[imgio.load_image_u8(p) for p in paths],
        exposures=exposures)
    offsets = radiometry.mtb_align(stack, max_shift=int(cfg.get("max_align_shift", 16)))
    aligned = radiometry.apply_shifts(stack, offsets)
    samples = np.stack([radiometry.downsample_card(img).reshape(-1, 3)
                        for img in aligned.images], axis=1)
    return radiometry.solve_response(samples, exposures,
                                     lam_smooth=float(cfg.get("lambda_smooth", 100.0)))


def calibrate_gray(cfg: SessionConfig, curve: radiometry.ResponseCurve) -> CalibrationRecord:
    """Gray-card workflow: merge the gray-card shot(s) into radiance, invert
    the Lambertian render for E, and record the capture distance."""
    paths = cfg.require_files("gray_card_images")
    for key in ("gray_card_exposures", "gray_card_r_perp"):
        if key not in cfg.raw:
            raise InvalidInputError(f"config missing required field '{key}'")
    exposures = [float(t) for t in cfg.raw["gray_card_exposures"]]
    if len(paths) != len(exposures):
        raise InvalidInputError("gray card image and exposure counts differ")
    r_gray = float(cfg.raw["gray_card_r_perp"])
    if r_gray <= 0:
        raise InvalidInputError("gray_card_r_perp must be positive")

    stack = radiometry.ExposureStack(
        images=[imgio.load_image_u8(p) for p in paths],
        exposures=exposures)
    if len(stack.images) > 1:
        offsets = radiometry.mtb_align(stack, max_shift=int(cfg.get("max_align_shift", 16)))
        stack = radiometry.apply_shifts(stack, offsets)
    radiance = radiometry.merge_radiance(stack, curve)

    h, w = radiance.shape[:2]
    camera = CameraSpec(f35=float(cfg.raw["f35"]), image_width=w, image_height=h)
    delta = pixel_pitch(camera)
    light_pos = estimate_light_position(grayscale(radiance), camera, delta)
    geom = SceneGeometry(light_pos=light_pos, pixel_pitch=delta, r_perp=r_gray,
                         light_intensity=1.0)
    e_gray = radiometry.gray_card_intensity(radiance, geom)
    if e_gray <= 0:
        raise CalibrationError("gray-card calibration produced non-positive intensity")
    return CalibrationRecord(e_gray=e_gray, r_gray=r_gray, exposures=exposures,
                             iso=cfg.get("iso"), white_balance=cfg.get("white_balance"))
