"""Command-line front end.

Subcommands: calibrate-response, calibrate-gray, fit, render-preview, synth,
cluster-debug. Exit codes: 0 success, 2 validation error, 3 calibration
failure, 4 fit error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bundle as bundle_mod
from . import clustering, imgio, radiometry, session, synth
from .errors import CalibrationError, DegenerateInputError, FitError, InvalidInputError
from .fitting import FitConfig, run_pipeline

EXIT_VALIDATION = 2
EXIT_CALIBRATION = 3
EXIT_FIT = 4


def _out_dir(args, cfg=None, default="out") -> Path:
    if args.out:
        out = Path(args.out)
    elif cfg is not None and cfg.get("output_dir"):
        out = cfg.resolve(cfg.get("output_dir"))
    else:
        out = Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_config(args, cfg) -> FitConfig:
    def pick(flag, key, fallback):
        if flag is not None:
            return flag
        return cfg.get(key, fallback) if cfg else fallback

    return FitConfig(
        n_iters=int(pick(args.iters, "n_iters", 5)),
        k=int(pick(args.k, "k", clustering.DEFAULT_K)),
        gamma_scale=float(pick(args.gamma_scale, "gamma_scale", 1.0)),
        height_sigma=float(pick(args.height_sigma, "height_sigma", 0.5)),
        seed=int(pick(args.seed, "seed", 0)),
    )


def cmd_calibrate_response(args) -> int:
    cfg = session.SessionConfig.load(args.config)
    out = _out_dir(args, cfg)
    curve = session.calibrate_response(cfg)
    path = out / "response_curve.csv"
    curve.save_csv(path)
    print(f"wrote {path}")
    return 0


def cmd_calibrate_gray(args) -> int:
    cfg = session.SessionConfig.load(args.config)
    out = _out_dir(args, cfg)
    curve = radiometry.ResponseCurve.load_csv(cfg.require_file("response_curve"))
    record = session.calibrate_gray(cfg, curve)
    path = out / "calibration.json"
    record.save(path)
    print(f"wrote {path} (E_gray={record.e_gray:.6g} at r={record.r_gray} m)")
    return 0


def cmd_fit(args) -> int:
    sess = session.load_session(args.config)
    cfg = sess.config
    out = _out_dir(args, cfg)
    fit_cfg = _fit_config(args, cfg)
    metallic = 1 if cfg.get("metallic", False) else 0
    imgio.save_exr(out / "radiance.exr", sess.radiance.astype(np.float32))
    solution = run_pipeline(
        sess.ambient, sess.radiance, sess.geometry, fit_cfg, metallic,
        diag_path=out / "diagnostics.jsonl",
        dump_dir=out / "debug" if args.debug_dumps else None)
    result = bundle_mod.SvbrdfBundle(
        solution=solution, light_intensity=sess.geometry.light_intensity,
        light_pos=sess.geometry.light_pos, pixel_pitch=sess.geometry.pixel_pitch,
        r_perp=sess.geometry.r_perp)
    bundle_mod.export_bundle(result, out)
    print(f"fit complete: roughness={solution.roughness:.4f}, bundle in {out}")
    return 0


def cmd_render_preview(args) -> int:
    result = bundle_mod.load_bundle(args.bundle)
    curve = radiometry.ResponseCurve.load_csv(args.curve) if args.curve \
        else radiometry.ResponseCurve.linear()
    light_pos = None
    if args.light:
        x, y = (float(v) for v in args.light.split(","))
        light_pos = np.array([x, y, 1.0])
    geom = result.geometry(light_pos=light_pos)
    preview = bundle_mod.render_preview(result, geom, float(args.exposure), curve)
    out = Path(args.out) if args.out else Path("preview.png")
    if out.is_dir():
        out = out / "preview.png"
    imgio.save_image_u8(out, preview)
    print(f"wrote {out}")
    return 0


def cmd_synth(args) -> int:
    out = _out_dir(args, default="synth_out")
    spec = synth.SynthSpec(
        resolution=(args.resolution, args.resolution),
        n_clusters=args.clusters, seed=int(args.seed or 0))
    ambient, radiance, truth, geom = synth.synth_generate(spec)
    imgio.save_png16(out / "ambient.png", ambient)
    imgio.save_exr(out / "radiance.exr", radiance)
    truth_bundle = bundle_mod.SvbrdfBundle(
        solution=truth, light_intensity=geom.light_intensity,
        light_pos=geom.light_pos, pixel_pitch=geom.pixel_pitch, r_perp=geom.r_perp)
    bundle_mod.export_bundle(truth_bundle, out / "truth")
    config = {
        "version": session.CONFIG_VERSION,
        "ambient_image": "ambient.png",
        "radiance_map": "radiance.exr",
        "light_intensity": geom.light_intensity,
        "light_pos": [float(v) for v in geom.light_pos],
        "f35": spec.f35,
        "r_perp": spec.r_perp,
        "metallic": bool(spec.metallic),
        "k": 16,
        "seed": spec.seed,
        "output_dir": "fit",
    }
    with open(out / "config.json", "w") as fh:
        json.dump(config, fh, indent=2)
    print(f"wrote synthetic sample to {out} (fit it with: svbrdfkit fit "
          f"--config {out / 'config.json'})")
    return 0


def cmd_cluster_debug(args) -> int:
    sess = session.load_session(args.config)
    cfg = sess.config
    out = _out_dir(args, cfg)
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    k = int(args.k if args.k is not None else cfg.get("k", clustering.DEFAULT_K))
    gamma_scale = float(args.gamma_scale if args.gamma_scale is not None
                        else cfg.get("gamma_scale", 1.0))
    features = clustering.extract_features(sess.ambient, seed=seed)
    gamma = clustering.default_gamma(features) * gamma_scale
    model = clustering.kprototypes_fit(features, k, gamma, seed=seed)
    labels = model.label_map(sess.ambient.shape[:2])
    imgio.save_labels(out / "labels.png", labels)
    imgio.save_image_u8(out / "labels_palette.png", clustering.labels_palette(labels))
    print(f"wrote cluster maps to {out} (k={k}, gamma={gamma:.6g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svbrdfkit",
        description="Recover svBRDF textures for planar material samples from "
                    "ambient + flash photo pairs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="session config JSON")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("calibrate-response", help="solve the camera response curve")
    common(p)
    p.set_defaults(func=cmd_calibrate_response)

    p = sub.add_parser("calibrate-gray", help="calibrate light intensity from a gray card")
    common(p)
    p.set_defaults(func=cmd_calibrate_gray)

    p = sub.add_parser("fit", help="fit svBRDF maps for a material sample")
    common(p)
    p.add_argument("--k", type=int, default=None, help="cluster count")
    p.add_argument("--gamma-scale", type=float, default=None,
                   help="multiplier on the default categorical weight")
    p.add_argument("--height-sigma", type=float, default=None,
                   help="height map strength factor")
    p.add_argument("--iters", type=int, default=None, help="refinement iterations")
    p.add_argument("--debug-dumps", action="store_true",
                   help="write intermediate maps every iteration")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render-preview", help="re-render a bundle to an LDR image")
    p.add_argument("--bundle", required=True, help="bundle directory")
    p.add_argument("--curve", help="response curve CSV (default: linear camera)")
    p.add_argument("--exposure", type=float, required=True, help="exposure time (s)")
    p.add_argument("--light", help="novel light position 'x,y' (z fixed at 1)")
    p.add_argument("--out", help="output image path")
    p.set_defaults(func=cmd_render_preview)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth sample")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--clusters", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster-debug", help="run clustering only and dump label maps")
    common(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--gamma-scale", type=float, default=None)
    p.set_defaults(func=cmd_cluster_debug)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
