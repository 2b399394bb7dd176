"""``dbpn`` command line: prepare, train, upscale, ibp, evaluate, params, gradcheck.

Exit status is 0 on success, 1 on a reported failure and 2 on a usage error.
The default ``--seed`` is 0.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import gradcheck
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .ibp import IbpConfig, ibp_run
from .imaging import SUPPORTED_SUFFIXES, ImagePlane, crop_to_multiple, degrade, load_image, luminance, save_image
from .metrics import EvalProtocol, format_db, psnr, ssim
from .network import PRESET_NAMES, build, describe, preset, published_params_k
from .tensor import Tensor, no_grad
from .training import TrainConfig, parse_config_file, train

DEFAULT_SEED = 0
GRADCHECK_TOL = 1e-4


class CommandError(Exception):
    """A failure reported to the user with exit status 1."""


def _image_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise CommandError(f"{path}: no such file or directory")
    return sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in SUPPORTED_SUFFIXES)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# prepare


def cmd_prepare(args) -> int:
    files = _image_files(Path(args.hr))
    out = Path(args.out)
    written = 0
    for f in files:
        try:
            hr = crop_to_multiple(load_image(f), args.scale)
        except (OSError, ValueError) as exc:
            _warn(f"skipping {f}: {exc}")
            continue
        name = f.name if f.suffix.lower() == ".png" else f.stem + ".png"
        save_image(hr, out / "HR" / name)
        save_image(degrade(hr, args.scale), out / "LR" / name)
        written += 1
    if not written:
        raise CommandError(f"no usable HR images in {args.hr}")
    print(f"wrote {written} LR/HR pairs at {args.scale}x to {out}/LR and {out}/HR")
    return 0


# ---------------------------------------------------------------------------
# train

_TRAIN_FLAGS = {
    "dataset": str,
    "scale": int,
    "preset": str,
    "batch_size": int,
    "patch_size": int,
    "iterations": int,
    "lr": float,
    "decay_factor": float,
    "decay_interval": int,
    "checkpoint_interval": int,
    "checkpoint_dir": str,
    "loss": str,
    "log_interval": int,
    "sampling": str,
    "dtype": str,
}


def train_config_from_args(args) -> TrainConfig:
    """Config file values first, then any flag given on the command line."""
    values = parse_config_file(args.config) if args.config else {}
    for key in _TRAIN_FLAGS:
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.no_augment:
        values["augment"] = False
    if args.seed is not None:
        values["seed"] = args.seed
    values.setdefault("seed", DEFAULT_SEED)
    if args.threads is not None:
        values["threads"] = args.threads
    unknown = set(values) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise CommandError(f"unknown training options: {', '.join(sorted(unknown))}")
    return TrainConfig(**values)


def cmd_train(args) -> int:
    config = train_config_from_args(args)
    if config.dataset is None:
        raise CommandError("no dataset: pass --dataset or set dataset= in the config file")
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    start = time.perf_counter()
    net, tlog = train(config, resume=args.resume)
    ckdir = Path(config.checkpoint_dir)
    model_path = Path(args.out) if args.out else ckdir / "model.ckpt"
    save_checkpoint(model_path, net, train_state={"iteration": config.iterations, "train_config": config.to_dict()})
    log_path = Path(args.log_csv) if args.log_csv else ckdir / "train_log.csv"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    tlog.to_csv(log_path)
    final = tlog.records[-1].loss if tlog.records else float("nan")
    print(f"trained {config.iterations} iterations in {time.perf_counter() - start:.1f}s, final loss {final:.6f}")
    print(f"model: {model_path}\nlog: {log_path}")
    return 0


# ---------------------------------------------------------------------------
# upscale / ibp


def _run_ibp(img: ImagePlane, scale: int, iters: int, sigma: float | None) -> tuple[ImagePlane, list[float]]:
    est, trace = ibp_run(img, IbpConfig(scale=scale, iterations=iters, sigma=sigma))
    return ImagePlane(est, img.colorspace), trace


def cmd_upscale(args) -> int:
    img = load_image(args.inp)
    start = time.perf_counter()
    if args.model is None:
        if args.scale is None:
            raise CommandError("give --model, or --scale to fall back to classical back-projection")
        out, _ = _run_ibp(img, args.scale, 10, None)
        how = f"ibp {args.scale}x"
    else:
        ckpt = load_checkpoint(args.model)
        net = ckpt.net
        cfg = net.config
        if args.scale is not None and args.scale != cfg.scale:
            raise CommandError(f"--scale {args.scale} does not match the model's {cfg.scale}x")
        if cfg.color == "Y" and img.channels == 3:
            print("note: Y-channel model on an RGB image; writing the upscaled Y channel only")
            img = luminance(img)
        elif cfg.color == "RGB" and img.channels == 1:
            raise CommandError(f"{args.inp} is single-channel but the model expects RGB input")
        px = img.pixels[None, None] if img.channels == 1 else img.pixels.transpose(2, 0, 1)[None]
        with no_grad(), threadpool_limits(limits=args.threads or 1):
            sr = net(Tensor(np.ascontiguousarray(px, dtype=net.dtype))).data[0]
        sr = sr[0] if sr.shape[0] == 1 else sr.transpose(1, 2, 0)
        out = ImagePlane(sr, img.colorspace)
        how = f"{cfg.name} {cfg.scale}x"
    save_image(out, args.out)
    print(f"{how}: {img.height}x{img.width} -> {out.height}x{out.width} in {time.perf_counter() - start:.2f}s")
    return 0


def cmd_ibp(args) -> int:
    img = load_image(args.inp)
    out, trace = _run_ibp(img, args.scale, args.iters, args.sigma)
    save_image(out, args.out)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual_l2"])
            for i, r in enumerate(trace, 1):
                w.writerow([i, f"{r:.10g}"])
    print(f"ibp {args.scale}x: {img.height}x{img.width} -> {out.height}x{out.width}, {len(trace)} iterations")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args) -> int:
    sr_files = {p.stem: p for p in _image_files(Path(args.sr))}
    gt_files = {p.stem: p for p in _image_files(Path(args.gt))}
    if Path(args.sr).is_file() and Path(args.gt).is_file():
        sr_files = {Path(args.gt).stem: Path(args.sr)}
    names = sorted(set(sr_files) & set(gt_files))
    for n in sorted(set(sr_files) ^ set(gt_files)):
        _warn(f"{n}: no counterpart, excluded")
    proto = EvalProtocol(scale=args.scale, crop=args.crop, y_only=not args.rgb)
    rows = []
    for n in names:
        try:
            a, b = load_image(sr_files[n]).pixels, load_image(gt_files[n]).pixels
            rows.append((n, psnr(a, b, proto), ssim(a, b, proto)))
        except (OSError, ValueError) as exc:
            _warn(f"{n}: {exc}, excluded")
    if not rows:
        raise CommandError("no SR/GT pairs matched")
    mean_p = float(np.mean([r[1] for r in rows]))
    mean_s = float(np.mean([r[2] for r in rows]))
    width = max(8, *(len(r[0]) for r in rows))
    print(f"{'image':<{width}}  {'PSNR':>9}  {'SSIM':>7}")
    for n, p, s in rows + [("mean", mean_p, mean_s)]:
        print(f"{n:<{width}}  {format_db(p):>9}  {s:7.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["image", "psnr_db", "ssim"])
            for n, p, s in rows + [("mean", mean_p, mean_s)]:
                w.writerow([n, "inf" if math.isinf(p) else f"{p:.4f}", f"{s:.6f}"])
    return 0


# ---------------------------------------------------------------------------
# params / gradcheck


def cmd_params(args) -> int:
    try:
        net = build(preset(args.preset, args.scale))
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    summary = describe(net)
    print(summary.format())
    ref = published_params_k(args.preset, args.scale)
    if ref is None:
        print("published figure: none")
        if args.expect_table1:
            raise CommandError(f"no published parameter count for {args.preset} at {args.scale}x")
        return 0
    dev = summary.total / (ref * 1000.0) - 1.0
    print(f"published figure: {ref:,}k  deviation: {100 * dev:+.2f}%")
    if args.expect_table1 and abs(dev) > 0.01:
        raise CommandError(f"parameter count off by {100 * dev:+.2f}% (limit 1%)")
    return 0


def cmd_gradcheck(args) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    corrupt = 1e-2 if args.corrupt_gradient else 0.0
    reports = gradcheck.SUITES[args.target](seed=seed, corrupt=corrupt)
    worst = 0.0
    for name, rep in reports.items():
        worst = max(worst, rep.max_rel_error)
        status = "ok" if rep.passed(GRADCHECK_TOL) else "FAIL"
        kinks = f"  ({rep.skipped}/{rep.probed} probes straddled a kink)" if rep.skipped else ""
        print(f"{name:<32} {rep.max_rel_error:.3e}  {status}{kinks}")
    print(f"{args.target}: max relative error {worst:.3e}")
    if worst >= GRADCHECK_TOL:
        raise CommandError(f"gradient check failed ({worst:.3e} >= {GRADCHECK_TOL:g})")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    def global_flags(default):
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=default, help=f"random seed (default {DEFAULT_SEED})")
        g.add_argument("--threads", type=int, default=default, help="BLAS threads (1 is the reference)")
        return g

    parser = argparse.ArgumentParser(prog="dbpn", description=__doc__.splitlines()[0], parents=[global_flags(None)])
    # accepted after the subcommand too; SUPPRESS keeps a value given before it
    common = global_flags(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="degrade HR images into LR/HR pairs")
    p.add_argument("--hr", required=True, help="HR image or directory")
    p.add_argument("--scale", type=int, required=True, choices=(2, 4, 8))
    p.add_argument("--out", required=True, help="output root; writes OUT/LR and OUT/HR")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train a network")
    p.add_argument("--config", help="key=value file; flags override it")
    for key, typ in _TRAIN_FLAGS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    p.add_argument("--no-augment", action="store_true", help="disable flips and rotations")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", help="final model path (default CHECKPOINT_DIR/model.ckpt)")
    p.add_argument("--log-csv", help="training log path (default CHECKPOINT_DIR/train_log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("upscale", parents=[common], help="super-resolve one image")
    p.add_argument("--model", help="checkpoint; without it --scale selects classical back-projection")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, choices=(2, 4, 8))
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("ibp", parents=[common], help="classical iterative back-projection")
    p.add_argument("--scale", type=int, required=True, choices=(2, 4, 8))
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--sigma", type=float, default=None, help="blur sigma (default scale/8)")
    p.add_argument("--trace", help="write iteration,residual_l2 CSV here")
    p.add_argument("inp", metavar="in")
    p.add_argument("out")
    p.set_defaults(func=cmd_ibp)

    p = sub.add_parser("evaluate", parents=[common], help="PSNR/SSIM of SR images against ground truth")
    p.add_argument("--sr", required=True, help="SR image or directory")
    p.add_argument("--gt", required=True, help="ground-truth image or directory")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--crop", type=int, default=None, help="border to ignore (default: scale)")
    p.add_argument("--rgb", action="store_true", help="score all RGB channels instead of Y")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("params", parents=[common], help="layer census and parameter count")
    p.add_argument("--preset", required=True, choices=PRESET_NAMES)
    p.add_argument("--scale", type=int, default=4, choices=(2, 4, 8))
    p.add_argument("--expect-table1", action="store_true", help="fail if >1%% off the published count")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suites")
    p.add_argument("--target", choices=tuple(gradcheck.SUITES), default="ops")
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CommandError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
