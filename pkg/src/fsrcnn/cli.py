"""Command-line entry point: params, train, finetune, upscale, eval, bench.

Exit codes: 0 success, 1 missing/unreadable files or malformed model
files, 2 usage and validation errors.  All randomness is controlled by
--seed; FSRCNN_THREADS provides the default for --threads.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from . import data as data_mod
from . import evaluation, model as model_mod, training
from .evaluation import BICUBIC
from .model import (ArchitectureSpec, FormatError, FSRCNN, SRCNN_915, SRCNN_EX_955,
                    TRANSITION_1, TRANSITION_2, count_parameters, estimate_cost,
                    speedup_vs_srcnn_ex)


class UsageError(ValueError):
    pass


def parse_arch(text: str, scale: int) -> ArchitectureSpec:
    """Parse 'fsrcnn:d,s,m' | 'srcnn:915' | 'srcnn:955' | 'transition:1|2'."""
    try:
        family, _, rest = text.partition(":")
        if family == "fsrcnn":
            d, s, m = (int(v) for v in rest.split(","))
            return ArchitectureSpec(FSRCNN, scale=scale, d=d, s=s, m=m)
        if family == "srcnn":
            kind = {"915": SRCNN_915, "955": SRCNN_EX_955}[rest]
            return ArchitectureSpec(kind, scale=scale)
        if family == "transition":
            kind = {"1": TRANSITION_1, "2": TRANSITION_2}[rest]
            return ArchitectureSpec(kind, scale=scale)
        raise KeyError(family)
    except (KeyError, ValueError) as e:
        raise UsageError(f"bad architecture {text!r}: {e}") from e


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("FSRCNN_THREADS", "1")))
    except ValueError:
        return 1


def _load_dir_images(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise OSError(f"not a directory: {directory}")
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in evaluation.IMAGE_SUFFIXES)
    if not paths:
        raise OSError(f"no images in {directory}")
    return [data_mod.load_image(p) for p in paths]


def _resolve_model(text: str):
    """A model path, or the literal 'bicubic' baseline."""
    if text == BICUBIC:
        return BICUBIC
    return model_mod.load_file(text)


def cmd_params(args) -> int:
    spec = parse_arch(args.arch, args.scale)
    weights_only = count_parameters(spec)
    with_extras = count_parameters(spec, include_bias_and_prelu=True)
    per_lr_px = estimate_cost(spec, 1, args.scale)
    speedup = speedup_vs_srcnn_ex(spec, args.scale)
    print(f"architecture         {spec.name}")
    print(f"scale                x{args.scale}")
    print(f"parameters           {weights_only} (weights only)")
    print(f"parameters           {with_extras} (with biases and PReLU slopes)")
    print(f"macs per LR pixel    {per_lr_px}")
    print(f"speedup vs SRCNN-Ex  {speedup:.1f}x")
    return 0


def _train_config(args, **overrides) -> training.TrainConfig:
    cfg = training.TrainConfig(
        lr_conv=args.lr_conv, lr_deconv=args.lr_deconv, momentum=args.momentum,
        batch_size=args.batch_size, max_iterations=args.iterations,
        eval_every=args.eval_every, rng_seed=args.seed)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def _make_pairs(directory, scale, stride, augment, threads):
    images = _load_dir_images(directory)
    return data_mod.make_training_set(images, scale, k=stride, augment=augment,
                                      threads=threads)


def _write_outputs(result, report, out_path, pairs) -> None:
    out_path = Path(out_path)
    model_mod.save_file(result, out_path)
    vals = dict(report.val_psnr)
    with open(out_path.with_suffix(out_path.suffix + ".csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "val_psnr", "seconds"])
        for (it, loss), sec in zip(report.losses, report.seconds):
            v = f"{vals[it]:.4f}" if it in vals else ""
            writer.writerow([it, f"{loss:.8g}", v, f"{sec:.6f}"])
    data_mod.write_manifest(pairs, out_path.with_suffix(out_path.suffix + ".manifest.txt"))


def cmd_train(args) -> int:
    spec = parse_arch(args.arch, args.scale)
    net = model_mod.build(spec, rng_seed=args.seed)
    pairs = _make_pairs(args.data, args.scale, args.stride, not args.no_augment,
                        args.threads)
    valset = _make_pairs(args.val, args.scale, args.stride, False, args.threads) \
        if args.val else None
    cfg = _train_config(args)
    if args.extra:
        extra = _make_pairs(args.extra, args.scale, args.stride,
                            not args.no_augment, args.threads)
        result, report = training.two_step_schedule(net, pairs, extra, valset, cfg)
    else:
        result, report = training.train(net, pairs, valset, cfg)
    _write_outputs(result, report, args.out, pairs)
    last_loss = report.losses[-1][1] if report.losses else float("nan")
    best = max((v for _, v in report.val_psnr), default=float("nan"))
    print(f"trained {spec.name} x{args.scale} for {len(report.losses)} iterations "
          f"on {len(pairs)} pairs; final loss {last_loss:.3g}, best val PSNR {best:.2f} dB")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_finetune(args) -> int:
    src = model_mod.load_file(args.src)
    pairs = _make_pairs(args.data, args.scale, args.stride, not args.no_augment,
                        args.threads)
    valset = _make_pairs(args.val, args.scale, args.stride, False, args.threads) \
        if args.val else None
    cfg = _train_config(args, finetune_halving=not args.no_halve_lr)
    result, report = training.finetune_for_scale(src, args.scale, pairs, valset, cfg)
    _write_outputs(result, report, args.out, pairs)
    best = max((v for _, v in report.val_psnr), default=float("nan"))
    print(f"fine-tuned deconvolution x{src.scale} -> x{args.scale} for "
          f"{len(report.losses)} iterations; best val PSNR {best:.2f} dB")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_upscale(args) -> int:
    net = _resolve_model(args.model)
    if net == BICUBIC:
        if args.scale is None:
            raise UsageError("--scale is required with the bicubic baseline")
        scale = args.scale
    else:
        if args.scale is not None and args.scale != net.scale:
            raise UsageError(f"--scale {args.scale} disagrees with model scale "
                             f"x{net.scale}")
        scale = net.scale
    img = data_mod.load_image(args.input)
    out = data_mod.bicubic_resize(img, scale) if net == BICUBIC \
        else data_mod.upscale_full(net, img)
    data_mod.save_image(out, args.out)
    print(f"{args.input} ({img.width}x{img.height}) -> {args.out} "
          f"({out.width}x{out.height})")
    return 0


def cmd_eval(args) -> int:
    net = _resolve_model(args.model)
    if net == BICUBIC and args.scale is None:
        raise UsageError("--scale is required with the bicubic baseline")
    result = evaluation.evaluate(net, args.dir, args.scale, threads=args.threads)
    for name, value in result.per_image:
        print(f"{name:30s} {value:8.4f} dB")
    print(f"{'mean':30s} {result.mean_psnr:8.4f} dB   "
          f"(x{result.scale}, shave {result.shave})")
    if args.csv:
        evaluation.eval_to_csv(result, args.csv)
    return 0


def cmd_bench(args) -> int:
    if args.model:
        net = model_mod.load_file(args.model)
    else:
        spec = parse_arch(args.arch, args.scale)
        net = model_mod.build(spec, rng_seed=args.seed)
    try:
        h, w = (int(v) for v in args.size.lower().split("x"))
    except ValueError as e:
        raise UsageError(f"bad --size {args.size!r}, expected HxW") from e
    result = evaluation.bench(net, (h, w), repeats=args.repeats, seed=args.seed)
    print(f"architecture      {net.spec.name} x{net.scale}")
    print(f"LR input          {h}x{w} ({h * w} px)")
    print(f"median forward    {result.median_seconds * 1e3:.2f} ms "
          f"over {args.repeats} runs (first run discarded)")
    print(f"fps               {result.fps:.2f}")
    print(f"macs              {result.macs}")
    print(f"effective GMAC/s  {result.gmacs_per_second:.2f}")
    if args.csv:
        evaluation.bench_to_csv([result], args.csv)
    return 0


def _add_train_flags(p, iterations_default):
    p.add_argument("--iterations", type=int, default=iterations_default)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr-conv", type=float, default=1e-3)
    p.add_argument("--lr-deconv", type=float, default=1e-4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--stride", type=int, default=None,
                   help="LR tiling stride (default: the sub-image side)")
    p.add_argument("--no-augment", action="store_true",
                   help="skip the 20-variant scale/rotation augmentation")
    p.add_argument("--val", help="directory of validation images")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--data", required=True, help="directory of training images")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsrcnn",
        description="Train, run, and benchmark FSRCNN/SRCNN super-resolution "
                    "networks on the CPU.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="parameter and MAC accounting for an architecture")
    p.add_argument("arch", help="fsrcnn:d,s,m | srcnn:915 | srcnn:955 | transition:1|2")
    p.add_argument("--scale", type=int, default=3)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("train", help="train a network from scratch")
    p.add_argument("--arch", required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--extra", help="extra image directory for two-step fine-tuning")
    _add_train_flags(p, iterations_default=10_000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="retrain only the deconvolution for a new scale")
    p.add_argument("--src", required=True, help="source checkpoint (FSRCNN)")
    p.add_argument("--scale", type=int, required=True, help="target scale")
    p.add_argument("--no-halve-lr", action="store_true",
                   help="keep full learning rates while fine-tuning")
    _add_train_flags(p, iterations_default=2_000)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("upscale", help="super-resolve one image")
    p.add_argument("--model", required=True, help="checkpoint path or 'bicubic'")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int)
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("eval", help="PSNR over a directory of images")
    p.add_argument("--model", required=True, help="checkpoint path or 'bicubic'")
    p.add_argument("--dir", required=True)
    p.add_argument("--scale", type=int)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="wall-clock forward-pass benchmark")
    p.add_argument("--model", help="checkpoint path")
    p.add_argument("--arch", help="architecture string (used when no --model)")
    p.add_argument("--scale", type=int, default=3)
    p.add_argument("--size", default="120x120", help="LR input size HxW")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_bench)

    for sp in sub.choices.values():
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=_default_threads())
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench" and bool(args.model) == bool(args.arch):
        print("error: bench needs exactly one of --model or --arch", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except training.TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
