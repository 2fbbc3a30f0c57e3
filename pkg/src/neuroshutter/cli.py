"""Command-line entry point: ``nsc <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 invariant
violation or failed calibration.
"""

import argparse
import csv
import sys
from dataclasses import asdict, replace
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from . import harness
from .crf import calibrate_crf, read_crf, write_crf
from .errors import ConfigError, FormatError, NscError
from .events import ContrastThreshold, read_events, simulate_events, write_events
from .fusion import fuse_sequence
from .imageio import read_pfm, write_pfm, write_pgm
from .metrics import exposure_stats, write_report
from .scene import draw_noise_params
from .shutter import CapturedFrame, ShutterConfig, capture, plan_exposures, read_sidecar, write_sidecar

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4

SIDECAR = "frames.csv"
CAPTURE_CONFIG = "capture.yaml"


def _shutter(args, base=None):
    cfg = base or harness.benchmark_shutter()
    if getattr(args, "config", None):
        data = _load_yaml(args.config)
        cfg = harness.shutter_from_dict(data.get("shutter", data), cfg)
    overrides = {}
    if getattr(args, "R", None) is not None:
        overrides["R"] = args.R
    if getattr(args, "tmax_us", None) is not None:
        overrides["T_max"] = args.tmax_us
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    return replace(cfg, **overrides)


def _load_yaml(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return data


def _noise(args):
    if getattr(args, "noise_free", False):
        return None
    return draw_noise_params(args.seed)


def _cfg_dict(cfg):
    return {k: (v.value if isinstance(v, Enum) else list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}


def _save_frames(out, frames, cfg):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for k, fr in enumerate(frames):
        write_pfm(out / f"frame_{k:05d}.pfm", fr.pixels)
        write_pgm(out / f"frame_{k:05d}.pgm", fr.pixels / cfg.gain(fr.exposure))
    write_sidecar(frames, out / SIDECAR)
    (out / CAPTURE_CONFIG).write_text(yaml.safe_dump({"shutter": _cfg_dict(cfg)}, sort_keys=True))


def _load_frames(folder):
    folder = Path(folder)
    side = folder / SIDECAR
    if not side.exists():
        raise FileNotFoundError(f"no {SIDECAR} in {folder}")
    frames = []
    for row in read_sidecar(side):
        pixels = read_pfm(folder / f"frame_{row['frame_idx']:05d}.pfm")
        frames.append(
            CapturedFrame(pixels, row["t_start_us"], row["t_end_us"], row["closure"], row["measure_at_close"])
        )
    cfg = ShutterConfig()
    if (folder / CAPTURE_CONFIG).exists():
        cfg = harness.shutter_from_dict(_load_yaml(folder / CAPTURE_CONFIG)["shutter"], ShutterConfig())
    return frames, cfg


def _scene(args):
    if not args.scene:
        raise ConfigError("--scene is required")
    return harness.resolve_scene(args.scene)


# --- subcommands ------------------------------------------------------------


def cmd_simulate(args):
    scene = _scene(args)
    stream = simulate_events(
        scene, ContrastThreshold(args.contrast), args.dt, background_rate_hz=args.background_hz, seed=args.seed
    )
    write_events(stream, args.out)
    print(f"{len(stream)} events over {scene.duration} us -> {args.out}")


def cmd_capture(args):
    scene = _scene(args)
    cfg = _shutter(args)
    events = read_events(args.events, scene.width, scene.height)
    plans = plan_exposures(events, cfg, scene.duration)
    frames = capture(scene, _noise(args), plans, cfg)
    _save_frames(args.out, frames, cfg)
    st = exposure_stats(frames)
    print(f"{st['count']} frames, mean exposure {st['mean']:.1f} us, closures {st['closures']}")


def cmd_denoise(args):
    frames, cfg = _load_frames(args.frames)
    events = read_events(args.events, frames[0].pixels.shape[1], frames[0].pixels.shape[0])
    crf = read_crf(args.crf) if args.crf else None
    fused = fuse_sequence(frames, events, crf=crf, dilation=args.dilation, masked=not args.unmasked)
    _save_frames(args.out, fused, cfg)
    print(f"fused {max(0, len(fused) - 2)} interior frames -> {args.out}")


def cmd_eval(args):
    scene = _scene(args)
    rows = []
    for folder in args.frames:
        frames, cfg = _load_frames(folder)
        score = harness.score_frames(frames, scene, cfg)
        rows.append(
            {
                "scene": harness.scene_label(args.scene),
                "method": args.method or Path(folder).name,
                "R": cfg.R,
                "psnr_db": score["psnr_db"],
                "ssim": score["ssim"],
                "mean_exposure_us": harness.mean_exposure(frames),
            }
        )
    write_report(rows, args.out)
    for r in rows:
        print(f"{r['method']}: PSNR {r['psnr_db']:.3f} dB, SSIM {r['ssim']:.4f}")


def cmd_sweep(args):
    spec = harness.load_spec(args.config) if args.config else harness.ExperimentSpec()
    updates = {}
    if args.scene:
        updates["scene"] = args.scene
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out:
        updates["out_dir"] = args.out
    if args.workers is not None:
        updates["workers"] = args.workers
    updates["shutter"] = _shutter(argparse.Namespace(R=args.R, tmax_us=args.tmax_us, mode=args.mode), spec.shutter)
    spec = replace(spec, **updates)
    if spec.out_dir is None:
        raise ConfigError("--out (or out_dir in the spec) is required")
    rows = harness.run_experiment(spec)
    for r in rows:
        tag = f"[{spec.sweep[0]}={r['value']}] " if spec.sweep else ""
        print(f"{tag}{r['method']:<10} PSNR {r['psnr_db']:7.3f} dB  SSIM {r['ssim']:.4f}  mean T {r['mean_exposure_us']:.0f} us")


def cmd_crf_calibrate(args):
    manifest = Path(args.stack)
    if not manifest.exists():
        raise FileNotFoundError(f"stack manifest not found: {manifest}")
    stack = []
    with open(manifest, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"path", "exposure_us"} <= set(reader.fieldnames):
            raise FormatError(f"{manifest}: expected columns path,exposure_us")
        for row in reader:
            image = read_pfm(manifest.parent / row["path"])
            stack.append((np.clip(image, 0.0, 1.0), float(row["exposure_us"])))
    curve = calibrate_crf(stack)
    write_crf(curve, args.out)
    print(f"CRF residual RMS {curve.residual_rms:.3e} on domain {curve.domain} -> {args.out}")


def build_parser():
    p = argparse.ArgumentParser(prog="nsc", description="Neuromorphic shutter control toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scene=True):
        if scene:
            sp.add_argument("--scene", help="scene YAML or benchmark:<mixed|local|global>[@seed]")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True)

    def shutter_flags(sp):
        sp.add_argument("--config", help="YAML with shutter settings")
        sp.add_argument("--mode", choices=["gea", "pea"])
        sp.add_argument("--R", type=int)
        sp.add_argument("--tmax-us", type=int, dest="tmax_us")

    sp = sub.add_parser("simulate", help="scene -> event file (.csv or binary)")
    common(sp)
    sp.add_argument("--contrast", type=float, default=0.15)
    sp.add_argument("--dt", type=int, default=harness.DEFAULT_EVENT_DT)
    sp.add_argument("--background-hz", type=float, default=0.0, dest="background_hz")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("capture", help="events + scene -> frames + sidecar")
    common(sp)
    shutter_flags(sp)
    sp.add_argument("--events", required=True)
    sp.add_argument("--noise-free", action="store_true", dest="noise_free")
    sp.set_defaults(func=cmd_capture)

    sp = sub.add_parser("denoise", help="frames + events -> fused frames")
    common(sp, scene=False)
    sp.add_argument("--frames", required=True)
    sp.add_argument("--events", required=True)
    sp.add_argument("--crf")
    sp.add_argument("--dilation", type=int, default=1)
    sp.add_argument("--unmasked", action="store_true")
    sp.set_defaults(func=cmd_denoise)

    sp = sub.add_parser("eval", help="frames vs scene -> report CSV")
    common(sp)
    sp.add_argument("--frames", nargs="+", required=True)
    sp.add_argument("--method")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="experiment spec -> result table")
    sp.add_argument("--config", help="experiment spec YAML")
    sp.add_argument("--scene")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--mode", choices=["gea", "pea"])
    sp.add_argument("--R", type=int)
    sp.add_argument("--tmax-us", type=int, dest="tmax_us")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("crf-calibrate", help="exposure stack -> CRF file")
    sp.add_argument("--stack", required=True, help="CSV manifest with columns path,exposure_us")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_crf_calibrate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NscError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
