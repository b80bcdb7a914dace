"""Image I/O, bicubic resampling, and training-pair generation.

Color images are converted to studio-swing BT.601 YCbCr and only the
luminance plane goes through the network; chroma is carried along and
upscaled with plain bicubic at reconstruction time.  The conversion
quantizes to the 8-bit grid, matching what rgb2ycbcr does to uint8 images
in the MATLAB-based evaluation scripts this field's published PSNR
numbers come from.

Resampling follows the MATLAB imresize convention: Keys cubic kernel
(a = -0.5), output size ceil(in * factor), replicate edges by clamping
sample positions, and a kernel widened by 1/factor when downscaling so it
antialiases.  Without the widening, bicubic PSNR baselines drift visibly.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import DTYPE

# LR sub-image side per scale factor, and the matching HR target side
# n*f_sub - n + 1 (the deconvolution output for an f_sub-sized input).
LR_SUB_SIZE = {2: 10, 3: 7, 4: 6}

_LOADABLE_FORMATS = {"PNG", "PPM", "BMP", "JPEG"}

# BT.601 studio-swing RGB -> YCbCr, scaled for [0,255] inputs.
_RGB2YCBCR = np.array([
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
]) / 255.0
_YCBCR_OFFSET = np.array([16.0, 128.0, 128.0])


@dataclass
class ImageY:
    """A luminance plane in [0,1] plus optional chroma and provenance."""
    y: np.ndarray                     # (1,1,h,w) float32
    cb: np.ndarray | None = None      # (h,w) float32
    cr: np.ndarray | None = None
    source: str = ""
    transforms: tuple[str, ...] = ()

    def __post_init__(self):
        if self.y.ndim != 4 or self.y.shape[:2] != (1, 1):
            raise ValueError(f"luminance must be (1,1,h,w), got {self.y.shape}")
        if self.y.shape[2] < 1 or self.y.shape[3] < 1:
            raise ValueError(f"degenerate image size {self.y.shape[2:]}")

    @property
    def height(self) -> int:
        return self.y.shape[2]

    @property
    def width(self) -> int:
        return self.y.shape[3]

    @property
    def plane(self) -> np.ndarray:
        """The (h,w) luminance view."""
        return self.y[0, 0]


def from_plane(plane: np.ndarray, source: str = "",
               transforms: tuple[str, ...] = ()) -> ImageY:
    plane = np.ascontiguousarray(plane, dtype=DTYPE)
    return ImageY(plane[None, None], source=source, transforms=transforms)


def load_image(path) -> ImageY:
    """Read PNG/PPM/PGM/BMP (JPEG with a warning) into an ImageY."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            fmt = img.format
            if fmt not in _LOADABLE_FORMATS:
                raise OSError(f"unsupported image format {fmt!r}: {path}")
            if fmt == "JPEG":
                warnings.warn(f"{path}: JPEG compression artifacts degrade "
                              f"super-resolution training and evaluation")
            if img.mode in ("P", "RGBA", "CMYK"):
                img = img.convert("RGB")
            elif img.mode in ("LA", "I", "I;16", "1"):
                img = img.convert("L")
            arr = np.asarray(img)
    except UnidentifiedImageError as e:
        raise OSError(f"cannot read image {path}: {e}") from e
    except FileNotFoundError as e:
        raise OSError(f"image file not found: {path}") from e

    if arr.ndim == 2:
        # Grayscale stays on the 8-bit grid exactly: v/255.
        y8 = arr.astype(np.float64)
        cb = cr = None
    else:
        ycc = arr.astype(np.float64) @ _RGB2YCBCR.T + _YCBCR_OFFSET
        ycc = np.rint(ycc)            # rgb2ycbcr on uint8 rounds to uint8
        y8, cb8, cr8 = ycc[..., 0], ycc[..., 1], ycc[..., 2]
        cb = (cb8 / 255.0).astype(DTYPE)
        cr = (cr8 / 255.0).astype(DTYPE)
    y = (y8 / 255.0).astype(DTYPE)
    return ImageY(y[None, None], cb=cb, cr=cr, source=str(path))


def save_image(img: ImageY, path) -> None:
    """Write an ImageY back to disk, recombining chroma when present."""
    y8 = np.clip(img.plane.astype(np.float64) * 255.0, 0, 255)
    if img.cb is None or img.cr is None:
        out = np.rint(y8).astype(np.uint8)
        Image.fromarray(out, mode="L").save(path)
        return
    ycc = np.stack([y8, img.cb.astype(np.float64) * 255.0,
                    img.cr.astype(np.float64) * 255.0], axis=-1)
    rgb = (ycc - _YCBCR_OFFSET) @ np.linalg.inv(_RGB2YCBCR).T
    rgb = np.rint(np.clip(rgb, 0, 255)).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path)


# ---------------------------------------------------------------------------
# Bicubic resampling
# ---------------------------------------------------------------------------

def _cubic(t: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel with a = -0.5, support [-2, 2]."""
    at = np.abs(t)
    at2 = at * at
    at3 = at2 * at
    return np.where(at <= 1, 1.5 * at3 - 2.5 * at2 + 1,
                    np.where(at < 2, -0.5 * at3 + 2.5 * at2 - 4 * at + 2, 0.0))


def _axis_weights(in_len: int, out_len: int, scale: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Sample indices (clamped, 0-based) and normalized weights for one axis."""
    if scale < 1.0:
        kernel = lambda t: scale * _cubic(scale * t)
        width = 4.0 / scale
    else:
        kernel = _cubic
        width = 4.0
    # 1-based center mapping: output x samples input at x/scale + 0.5(1 - 1/scale).
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1.0 - 1.0 / scale)
    left = np.floor(u - width / 2.0)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    wts = kernel(u[:, None] - idx)
    wts /= wts.sum(axis=1, keepdims=True)
    idx = np.clip(idx - 1, 0, in_len - 1).astype(np.int64)
    return idx, wts


def resize_plane(plane: np.ndarray, factor) -> np.ndarray:
    """MATLAB-convention bicubic resize of a 2-D plane by a scalar factor.

    `factor` may be a Fraction, which keeps the ceil() output-size rule
    exact for factors like 1/3.
    """
    if factor <= 0:
        raise ValueError(f"resize factor must be positive, got {factor}")
    in_h, in_w = plane.shape
    out_h = int(math.ceil(in_h * factor))
    out_w = int(math.ceil(in_w * factor))
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize of {plane.shape} by {factor} collapses to zero size")
    scale = float(factor)
    a = plane.astype(np.float64)
    ridx, rw = _axis_weights(in_h, out_h, scale)
    a = np.einsum("otw,ot->ow", a[ridx, :], rw)
    cidx, cw = _axis_weights(in_w, out_w, scale)
    a = np.einsum("hot,ot->ho", a[:, cidx], cw)
    return a.astype(DTYPE)


def bicubic_resize(img: ImageY, factor) -> ImageY:
    y = resize_plane(img.plane, factor)
    cb = resize_plane(img.cb, factor) if img.cb is not None else None
    cr = resize_plane(img.cr, factor) if img.cr is not None else None
    return ImageY(y[None, None], cb=cb, cr=cr, source=img.source,
                  transforms=img.transforms + (f"resize{float(factor):g}",))


def modcrop(img: ImageY, n: int) -> ImageY:
    """Top-left crop so both sides divide by n."""
    h = img.height - img.height % n
    w = img.width - img.width % n
    if h == img.height and w == img.width:
        return img
    cb = img.cb[:h, :w] if img.cb is not None else None
    cr = img.cr[:h, :w] if img.cr is not None else None
    return ImageY(np.ascontiguousarray(img.y[:, :, :h, :w]), cb=cb, cr=cr,
                  source=img.source, transforms=img.transforms + (f"modcrop{n}",))


# ---------------------------------------------------------------------------
# Training pairs
# ---------------------------------------------------------------------------

AUGMENT_SCALES = (1.0, 0.9, 0.8, 0.7, 0.6)
AUGMENT_ROTATIONS = (0, 90, 180, 270)


@dataclass
class SamplePair:
    """One LR sub-image and its aligned HR target."""
    lr: np.ndarray        # (1,1,f_sub,f_sub)
    hr: np.ndarray        # (1,1,L,L) with L = n*f_sub - n + 1
    scale: int
    source: str = ""
    transform: str = ""
    origin: tuple[int, int] = (0, 0)   # LR tile origin (y,x)


def _pairs_from_variant(plane: np.ndarray, n: int, k: int, source: str,
                        transform: str) -> list[SamplePair]:
    f_sub = LR_SUB_SIZE[n]
    hr_side = n * f_sub - n + 1
    gt = plane[:plane.shape[0] - plane.shape[0] % n,
               :plane.shape[1] - plane.shape[1] % n]
    lr = resize_plane(gt, Fraction(1, n))
    h, w = lr.shape
    if h < f_sub or w < f_sub:
        warnings.warn(f"{source} [{transform}]: {h}x{w} after downscale is smaller "
                      f"than the {f_sub}x{f_sub} sub-image size, skipping")
        return []
    pairs = []
    for y0 in range(0, h - f_sub + 1, k):
        for x0 in range(0, w - f_sub + 1, k):
            lr_patch = lr[y0:y0 + f_sub, x0:x0 + f_sub]
            hr_patch = gt[n * y0:n * y0 + hr_side, n * x0:n * x0 + hr_side]
            pairs.append(SamplePair(
                lr=np.ascontiguousarray(lr_patch, dtype=DTYPE)[None, None],
                hr=np.ascontiguousarray(hr_patch, dtype=DTYPE)[None, None],
                scale=n, source=source, transform=transform, origin=(y0, x0)))
    return pairs


def _variants(plane: np.ndarray, augment: bool):
    if not augment:
        yield "s1-r0", plane
        return
    for s in AUGMENT_SCALES:
        scaled = plane if s == 1.0 else resize_plane(plane, s)
        for rot in AUGMENT_ROTATIONS:
            rotated = scaled if rot == 0 else np.ascontiguousarray(np.rot90(scaled, rot // 90))
            yield f"s{s:g}-r{rot}", rotated


def make_training_set(images: list[ImageY], n: int, k: int | None = None,
                      augment: bool = True, threads: int = 1) -> list[SamplePair]:
    """Cut every image (and each of its 20 augmented variants) into LR/HR pairs.

    The HR image is top-left cropped to a multiple of n, downscaled by 1/n,
    and tiled with stride k (default: the sub-image side, disjoint tiles).
    Each HR target starts at exactly n times its LR tile origin.  Output
    order is (image, variant, tile row, tile column) regardless of thread
    count.
    """
    if not images:
        raise ValueError("no training images given")
    if n not in LR_SUB_SIZE:
        raise ValueError(f"scale must be one of {sorted(LR_SUB_SIZE)}, got {n}")
    if k is None:
        k = LR_SUB_SIZE[n]
    if k < 1:
        raise ValueError(f"stride must be >= 1, got {k}")

    def one_image(img: ImageY) -> list[SamplePair]:
        out = []
        for transform, plane in _variants(img.plane, augment):
            out.extend(_pairs_from_variant(plane, n, k, img.source or "<memory>", transform))
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_image = list(ex.map(one_image, images))
    else:
        per_image = [one_image(img) for img in images]
    return [p for chunk in per_image for p in chunk]


def write_manifest(pairs: list[SamplePair], path) -> None:
    """Text index of a training set: one 'source  transform  y,x' line per pair."""
    with open(path, "w") as fh:
        for p in pairs:
            fh.write(f"{p.source}\t{p.transform}\t{p.origin[0]},{p.origin[1]}\n")


# ---------------------------------------------------------------------------
# Full-image inference
# ---------------------------------------------------------------------------

def upscale_full(model, img: ImageY) -> ImageY:
    """Upscale a whole image to exactly (n*h, n*w).

    Deconvolution-terminated networks natively produce n*h - n + 1 per
    side, so the LR plane is replicate-padded by one pixel on the bottom
    and right and the n*h + 1 sized output cropped back from the top-left;
    this avoids the dark fringe that zero output-padding would leave.
    SRCNN-style networks get the classic bicubic pre-interpolation.
    Chroma planes, when present, are upscaled with plain bicubic.
    """
    from .model import _HR_INPUT_KINDS

    n = model.scale
    h, w = img.height, img.width
    if model.spec.kind in _HR_INPUT_KINDS:
        x = resize_plane(img.plane, n)[None, None]
        out = model.forward(x)
    else:
        x = np.pad(img.y, ((0, 0), (0, 0), (0, 1), (0, 1)), mode="edge")
        out = model.forward(x)[:, :, :n * h, :n * w]
    out = np.clip(out, 0.0, 1.0)
    cb = np.clip(resize_plane(img.cb, n), 0.0, 1.0) if img.cb is not None else None
    cr = np.clip(resize_plane(img.cr, n), 0.0, 1.0) if img.cr is not None else None
    return ImageY(np.ascontiguousarray(out), cb=cb, cr=cr, source=img.source,
                  transforms=img.transforms + (f"sr-x{n}",))
