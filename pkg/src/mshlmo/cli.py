"""Command-line front end: register, match, sweep, render.

Exit codes: 0 success, 1 usage or I/O problem, 2 registration failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import register as reg
from .affine import AffineModel
from .config import PipelineConfig, apply_overrides, load_config
from .errors import RegistrationError, RegistrationFailureError
from .ingest import load_gray, save_png
from .pipeline import run_pair
from .scalespace import build_pyramid

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REGISTRATION_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract reserves 2 for
    # registration failure, so remap.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--max-points", type=int, dest="max_points")
    p.add_argument("--sectors", type=int, dest="n_sectors")
    p.add_argument("--bins", type=int, dest="n_bins")
    p.add_argument("--r2", type=float, dest="r2")
    p.add_argument("--octaves", type=int, dest="n_octaves")
    p.add_argument("--layers", type=int, dest="n_layers")
    p.add_argument("--pmom-scales", type=int, dest="pmom_scales")
    p.add_argument(
        "--no-rotation-invariance",
        action="store_true",
        help="reference orientation fixed to 0 (for pairs without rotation)",
    )
    p.add_argument("--inlier-threshold", type=float, dest="inlier_threshold")
    p.add_argument("--iterations", type=int, dest="max_iterations")
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--band", help="'sum' or a 0-based band index")
    p.add_argument("--denoise", action="store_true", default=None)
    p.add_argument("--repeats", type=int, dest="repeats")
    p.add_argument("--threads", type=int, dest="threads")


_CONFIG_KEYS = (
    "max_points", "n_sectors", "n_bins", "r2", "n_octaves", "n_layers",
    "pmom_scales", "inlier_threshold", "max_iterations", "seed", "band",
    "denoise", "repeats", "threads",
)


def _build_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS if getattr(args, k) is not None}
    if args.no_rotation_invariance:
        overrides["rotation_invariant"] = False
    return apply_overrides(cfg, overrides)


def _maybe_dump_pyramid(img, cfg: PipelineConfig, out_dir, tag: str) -> None:
    if out_dir is None:
        return
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    pyr = build_pyramid(img, cfg.n_octaves, cfg.n_layers, cfg.pyramid_sigma)
    for o, layers in enumerate(pyr.octaves):
        for l, layer in enumerate(layers):
            save_png(d / f"{tag}_o{o}_l{l}.png", layer.samples)


def _write_model(path, model: AffineModel) -> None:
    m = model
    Path(path).write_text(
        f"{m.a11:.12g} {m.a12:.12g} {m.tx:.12g} {m.a21:.12g} {m.a22:.12g} {m.ty:.12g}\n"
    )


def _read_model(path) -> AffineModel:
    vals = [float(v) for v in Path(path).read_text().split()]
    if len(vals) != 6:
        raise ValueError(f"{path}: expected 6 numbers, got {len(vals)}")
    a11, a12, tx, a21, a22, ty = vals
    return AffineModel(a11=a11, a12=a12, a21=a21, a22=a22, tx=tx, ty=ty)


def cmd_register(args) -> int:
    cfg = _build_config(args)
    ref = load_gray(args.reference, cfg.band_mode(), cfg.denoise)
    sen = load_gray(args.sensed, cfg.band_mode(), cfg.denoise)
    reference = "first"
    if not args.no_auto_reference and sen.width * sen.height > ref.width * ref.height:
        ref, sen = sen, ref
        reference = "second"
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _maybe_dump_pyramid(ref, cfg, args.dump_pyramid, "ref")
    _maybe_dump_pyramid(sen, cfg, args.dump_pyramid, "sen")

    start = time.perf_counter()
    result = run_pair(ref, sen, cfg)
    runtime = time.perf_counter() - start

    warped = reg.warp(sen, result.model, out_size=ref.size)
    _write_model(out / "model.txt", result.model)
    (out / "matches.json").write_text(
        result.matches.to_json(result.kp_ref_xy, result.kp_sen_xy)
    )
    save_png(out / "warped.png", warped.samples)
    save_png(out / "fusion.png", reg.render(ref, warped, "fusion"))
    save_png(out / "checkerboard.png", reg.render(ref, warped, "checkerboard", args.block))
    report = reg.RegistrationReport(
        inlier_count=len(result.matches),
        model=result.model,
        runtime_s=runtime,
        n_keypoints_ref=len(result.kp_ref),
        n_keypoints_sen=len(result.kp_sen),
        stage_counts=result.stage_counts,
        reference=reference,
    )
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    print(
        f"registered: {len(result.matches)} inliers, "
        f"model written to {out / 'model.txt'}"
    )
    return EXIT_OK


def cmd_match(args) -> int:
    cfg = _build_config(args)
    ref = load_gray(args.reference, cfg.band_mode(), cfg.denoise)
    sen = load_gray(args.sensed, cfg.band_mode(), cfg.denoise)
    _maybe_dump_pyramid(ref, cfg, args.dump_pyramid, "ref")
    _maybe_dump_pyramid(sen, cfg, args.dump_pyramid, "sen")
    result = run_pair(ref, sen, cfg)
    Path(args.out).write_text(
        result.matches.to_json(result.kp_ref_xy, result.kp_sen_xy)
    )
    print(f"{len(result.matches)} matches written to {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    img = load_gray(args.image, cfg.band_mode(), cfg.denoise)
    threads = cfg.threads
    if args.kind == "rotation":
        angles = np.arange(0.0, 360.0, args.step)
        rows = reg.sweep_rotation(img, angles, cfg, threads=threads)
    elif args.kind == "scale":
        ratios = np.round(np.arange(1.0, 2.0 + 1e-9, args.step), 10)
        rows = reg.sweep_scale(img, ratios, cfg, threads=threads)
    else:
        rows = reg.sweep_intensity(img, cfg, threads=threads)
    reg.write_sweep_csv(args.out, rows)
    n_ok = sum(r.success for r in rows)
    print(f"{args.kind} sweep: {n_ok}/{len(rows)} cases succeeded -> {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    ref = load_gray(args.reference)
    sen = load_gray(args.sensed)
    model = _read_model(args.model) if args.model else AffineModel.identity()
    warped = reg.warp(sen, model, out_size=ref.size)
    save_png(args.out, reg.render(ref, warped, args.mode, args.block))
    print(f"{args.mode} composite written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mshlmo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="register a sensed image to a reference")
    p.add_argument("reference")
    p.add_argument("sensed")
    p.add_argument("-o", "--out-dir", default="registration_out")
    p.add_argument("--block", type=int, default=64, help="checkerboard block size")
    p.add_argument(
        "--no-auto-reference",
        action="store_true",
        help="keep argument order instead of using the larger image as reference",
    )
    p.add_argument("--dump-pyramid", metavar="DIR")
    _add_config_flags(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("match", help="match keypoints without estimating a warp")
    p.add_argument("reference")
    p.add_argument("sensed")
    p.add_argument("-o", "--out", default="matches.json")
    p.add_argument("--dump-pyramid", metavar="DIR")
    _add_config_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("sweep", help="synthetic invariance sweeps")
    p.add_argument("kind", choices=("rotation", "scale", "intensity"))
    p.add_argument("image")
    p.add_argument("-o", "--out", default="sweep.csv")
    p.add_argument("--step", type=float, default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="composite two images for inspection")
    p.add_argument("reference")
    p.add_argument("sensed")
    p.add_argument("-o", "--out", default="composite.png")
    p.add_argument("--model", help="model file; identity if omitted")
    p.add_argument("--mode", choices=reg.RENDER_MODES, default="checkerboard")
    p.add_argument("--block", type=int, default=64)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "step", None) is None and getattr(args, "kind", None):
        args.step = 1.0 if args.kind == "rotation" else 0.1
    try:
        return args.func(args)
    except RegistrationFailureError as exc:
        print(f"registration failed: {exc}", file=sys.stderr)
        return EXIT_REGISTRATION_FAILURE
    except (RegistrationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
