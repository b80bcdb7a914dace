"""PSNR measurement and CPU inference benchmarking.

PSNR follows the super-resolution reporting convention: luminance only,
a border of `shave` pixels (normally the scale factor) excluded on every
side, 10*log10(1/MSE) on [0,1] values, identical images reported as +inf.
Ground truth is top-left cropped to a multiple of the scale factor so the
LR/HR shape arithmetic stays exact.

Benchmarks time single-image forward passes on synthetic input, discard
the first (warm-up) run, and report the median plus the analytic
multiply-accumulate count, so hardware-independent claims can be made as
ratios rather than absolute fps.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .data import ImageY, bicubic_resize, load_image, modcrop, upscale_full
from .model import Model, estimate_cost
from .tensor import DTYPE

BICUBIC = "bicubic"   # pseudo-model name accepted wherever a Model is evaluated

IMAGE_SUFFIXES = {".png", ".bmp", ".ppm", ".pgm", ".jpg", ".jpeg"}


@dataclass
class EvalResult:
    per_image: list[tuple[str, float]]
    mean_psnr: float
    shave: int
    scale: int


@dataclass
class BenchResult:
    seconds: list[float]          # warmed-up per-run wall clock
    median_seconds: float
    fps: float
    macs: int
    gmacs_per_second: float
    lr_size: tuple[int, int]
    scale: int


def psnr(reference: ImageY, candidate: ImageY, shave: int = 0) -> float:
    """PSNR in dB between two luminance planes, borders shaved."""
    if shave < 0:
        raise ValueError("shave must be >= 0")
    a = reference.plane
    b = candidate.plane
    if a.shape != b.shape:
        raise ValueError(f"image sizes differ: {a.shape} vs {b.shape}")
    if shave:
        if 2 * shave >= min(a.shape):
            raise ValueError(f"shave {shave} leaves no pixels of {a.shape}")
        a = a[shave:-shave, shave:-shave]
        b = b[shave:-shave, shave:-shave]
    d = a.astype(np.float64) - b.astype(np.float64)
    m = float(np.mean(d * d))
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / m)


def _super_resolve(model, lr_img: ImageY, n: int) -> ImageY:
    if model == BICUBIC:
        return bicubic_resize(lr_img, n)
    return upscale_full(model, lr_img)


def evaluate(model, test_dir, n: int | None = None, threads: int = 1) -> EvalResult:
    """Downscale every image in a directory by 1/n, super-resolve it back,
    and report per-image and mean PSNR with a shave of n.

    `model` is a Model (whose scale wins over `n`) or the string "bicubic".
    """
    if isinstance(model, Model):
        n = model.scale
    elif n is None:
        raise ValueError("scale is required for the bicubic baseline")
    test_dir = Path(test_dir)
    paths = sorted(p for p in test_dir.iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES) if test_dir.is_dir() else []
    if not paths:
        raise ValueError(f"no test images found in {test_dir}")

    def one(path: Path) -> tuple[str, float]:
        gt = modcrop(load_image(path), n)
        lr = bicubic_resize(gt, Fraction(1, n))
        sr = _super_resolve(model, lr, n)
        return path.name, psnr(gt, sr, shave=n)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_image = list(ex.map(one, paths))
    else:
        per_image = [one(p) for p in paths]
    mean = sum(v for _, v in per_image) / len(per_image)
    return EvalResult(per_image=per_image, mean_psnr=mean, shave=n, scale=n)


def bench(model: Model, lr_size: tuple[int, int], repeats: int = 5,
          seed: int = 0) -> BenchResult:
    """Median wall-clock of single-image forward passes on synthetic input."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    h, w = lr_size
    rng = np.random.default_rng(seed)
    x = rng.random((1, 1, h, w), dtype=np.float64).astype(DTYPE)
    model.forward(x)   # warm-up, excluded from timing
    seconds = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.forward(x)
        seconds.append(time.perf_counter() - t0)
    med = float(np.median(seconds))
    macs = estimate_cost(model.spec, h * w)
    return BenchResult(seconds=seconds, median_seconds=med, fps=1.0 / med,
                       macs=macs, gmacs_per_second=macs / med / 1e9,
                       lr_size=(h, w), scale=model.scale)


def eval_to_csv(result: EvalResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "psnr_db"])
        for name, value in result.per_image:
            writer.writerow([name, f"{value:.4f}"])
        writer.writerow(["mean", f"{result.mean_psnr:.4f}"])


def bench_to_csv(results: list[BenchResult], path, psnrs: list[float] | None = None) -> None:
    """One row per benchmark; optional PSNR column for speed/quality scatter plots."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["lr_height", "lr_width", "scale", "median_seconds", "fps",
                  "macs", "gmacs_per_second"]
        if psnrs is not None:
            header.append("psnr_db")
        writer.writerow(header)
        for i, r in enumerate(results):
            row = [r.lr_size[0], r.lr_size[1], r.scale, f"{r.median_seconds:.6f}",
                   f"{r.fps:.3f}", r.macs, f"{r.gmacs_per_second:.3f}"]
            if psnrs is not None:
                row.append(f"{psnrs[i]:.4f}")
            writer.writerow(row)
