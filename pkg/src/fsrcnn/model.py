"""Network assembly, cost accounting, serialization, and cross-scale transfer.

Five named architectures are supported.  The hourglass network
FSRCNN(d, s, m) is

    Conv(5,d,1)-PReLU-Conv(1,s,d)-PReLU-m*[Conv(3,s,s)-PReLU]-Conv(1,d,s)
    -PReLU-DeConv(9,1,d)

where d is the LR feature dimension, s the shrunken mapping width and m
the mapping depth.  The SRCNN baselines (9-1-5 and 9-5-5) operate on a
pre-interpolated image; the two transition variants replace the SRCNN
reconstruction with a deconvolution so they run on the raw LR image.

Parameter counts default to weights only (sum of f^2 * filters * channels
per layer); biases and PReLU slopes are counted behind a flag.  The
weights-only convention is the one under which the published counts for
these architectures (8032, 57184, 12464, ...) are exact, and for the
hourglass nets it coincides with the per-LR-pixel multiply-accumulate
cost 9ms^2 + 2sd + 106d.
"""

from __future__ import annotations

import copy
import struct
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .layers import ConvLayer, DeconvLayer, PReLULayer
from .tensor import DTYPE

SRCNN_915 = "srcnn915"
SRCNN_EX_955 = "srcnn955"
TRANSITION_1 = "transition1"
TRANSITION_2 = "transition2"
FSRCNN = "fsrcnn"

VALID_KINDS = (SRCNN_915, SRCNN_EX_955, TRANSITION_1, TRANSITION_2, FSRCNN)
VALID_SCALES = (2, 3, 4)

# Architectures whose input is the bicubic-interpolated image, so their
# per-pixel cost applies to the HR grid rather than the LR grid.
_HR_INPUT_KINDS = (SRCNN_915, SRCNN_EX_955)


@dataclass(frozen=True)
class LayerSpec:
    """One layer slot: kind is conv / deconv / prelu."""
    kind: str
    filter_size: int
    out_channels: int
    in_channels: int


@dataclass(frozen=True)
class ArchitectureSpec:
    kind: str
    scale: int
    d: int = 0
    s: int = 0
    m: int = 0

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if self.scale not in VALID_SCALES:
            raise ValueError(f"scale must be one of {VALID_SCALES}, got {self.scale}")
        if self.kind == FSRCNN and not (self.d >= self.s >= 1 and self.m >= 0):
            raise ValueError(f"FSRCNN requires d >= s >= 1 and m >= 0, "
                             f"got d={self.d}, s={self.s}, m={self.m}")

    def layer_specs(self) -> list[LayerSpec]:
        """Ordered layer list; a PReLU follows every conv but never the last layer."""
        def conv(f, out, inp):
            return [LayerSpec("conv", f, out, inp), LayerSpec("prelu", 0, out, out)]

        if self.kind == SRCNN_915:
            body = conv(9, 64, 1) + conv(1, 32, 64)
            last = [LayerSpec("conv", 5, 1, 32)]
        elif self.kind == SRCNN_EX_955:
            body = conv(9, 64, 1) + conv(5, 32, 64)
            last = [LayerSpec("conv", 5, 1, 32)]
        elif self.kind == TRANSITION_1:
            body = conv(9, 64, 1) + conv(5, 32, 64)
            last = [LayerSpec("deconv", 9, 1, 32)]
        elif self.kind == TRANSITION_2:
            body = conv(9, 64, 1) + conv(1, 12, 64)
            for _ in range(4):
                body += conv(3, 12, 12)
            body += conv(1, 64, 12)
            last = [LayerSpec("deconv", 9, 1, 64)]
        else:
            body = conv(5, self.d, 1) + conv(1, self.s, self.d)
            for _ in range(self.m):
                body += conv(3, self.s, self.s)
            body += conv(1, self.d, self.s)
            last = [LayerSpec("deconv", 9, 1, self.d)]
        return body + last

    @property
    def name(self) -> str:
        if self.kind == FSRCNN:
            return f"FSRCNN({self.d},{self.s},{self.m})"
        return {SRCNN_915: "SRCNN(9-1-5)", SRCNN_EX_955: "SRCNN-Ex(9-5-5)",
                TRANSITION_1: "Transition-1", TRANSITION_2: "Transition-2"}[self.kind]


@dataclass
class InitPolicy:
    """Weight initialization knobs.

    Conv filters draw from a zero-mean Gaussian with variance
    2 / ((1 + slope^2) * fan_in), fan_in = f^2 * in_channels, the init
    derived for PReLU activations.  The final deconvolution has no
    activation after it and draws from Gaussian(0, deconv_std).
    """
    prelu_slope: float = 0.25
    deconv_std: float = 0.001


class Model:
    """An ArchitectureSpec realized as parameterized layers."""

    def __init__(self, spec: ArchitectureSpec, layers: list):
        self.spec = spec
        self.layers = layers

    @property
    def scale(self) -> int:
        return self.spec.scale

    def parametric_layers(self):
        """(index, layer) for layers that own parameters, i.e. all of them."""
        return list(enumerate(self.layers))

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"model input must be (N,1,H,W), got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    def __repr__(self):
        return f"Model({self.spec.name}, x{self.scale})"


def count_parameters(spec: ArchitectureSpec, include_bias_and_prelu: bool = False) -> int:
    total = 0
    for ls in spec.layer_specs():
        if ls.kind == "prelu":
            if include_bias_and_prelu:
                total += ls.out_channels
        else:
            total += ls.filter_size ** 2 * ls.out_channels * ls.in_channels
            if include_bias_and_prelu:
                total += ls.out_channels
    return total


def macs_per_input_pixel(spec: ArchitectureSpec) -> int:
    """Multiply-accumulates per pixel of the network's own input grid.

    Stride-1 same-padded convolution costs f^2*out*in per pixel, and the
    deconvolution costs f^2*out per input pixel and input channel, so the
    per-pixel MAC count equals the weights-only parameter count.
    """
    return count_parameters(spec, include_bias_and_prelu=False)


def estimate_cost(spec: ArchitectureSpec, lr_pixels: int, scale: int | None = None) -> int:
    """Total MACs to upscale an LR image of `lr_pixels` pixels.

    SRCNN-family networks run on the interpolated image, so their input
    grid is scale^2 times larger than the LR grid.
    """
    if lr_pixels <= 0:
        raise ValueError("lr_pixels must be positive")
    n = spec.scale if scale is None else scale
    per_px = macs_per_input_pixel(spec)
    if spec.kind in _HR_INPUT_KINDS:
        return per_px * lr_pixels * n * n
    return per_px * lr_pixels


def speedup_vs_srcnn_ex(spec: ArchitectureSpec, scale: int | None = None) -> float:
    """Cost ratio of SRCNN-Ex over `spec` for the same LR input and scale."""
    n = spec.scale if scale is None else scale
    ref = ArchitectureSpec(SRCNN_EX_955, scale=n)
    px = 10_000  # cancels in the ratio
    return estimate_cost(ref, px, n) / estimate_cost(spec, px, n)


def build(spec: ArchitectureSpec, rng_seed: int, init: InitPolicy | None = None) -> Model:
    """Instantiate a model with freshly initialized parameters, deterministic in the seed."""
    init = init or InitPolicy()
    rng = np.random.default_rng(rng_seed)
    layers = []
    for ls in spec.layer_specs():
        if ls.kind == "conv":
            fan_in = ls.filter_size ** 2 * ls.in_channels
            std = np.sqrt(2.0 / ((1.0 + init.prelu_slope ** 2) * fan_in))
            w = rng.normal(0.0, std, (ls.out_channels, ls.in_channels,
                                      ls.filter_size, ls.filter_size)).astype(DTYPE)
            layers.append(ConvLayer(w, np.zeros(ls.out_channels, dtype=DTYPE)))
        elif ls.kind == "deconv":
            w = rng.normal(0.0, init.deconv_std,
                           (ls.in_channels, ls.out_channels,
                            ls.filter_size, ls.filter_size)).astype(DTYPE)
            layers.append(DeconvLayer(w, np.zeros(ls.out_channels, dtype=DTYPE),
                                      stride=spec.scale))
        else:
            layers.append(PReLULayer(np.full(ls.out_channels, init.prelu_slope, dtype=DTYPE)))
    return Model(spec, layers)


def transplant_conv_layers(src: Model, target_scale: int, rng_seed: int,
                           init: InitPolicy | None = None) -> Model:
    """Carry all conv/PReLU parameters of a trained hourglass net to a new scale.

    The convolution stack is copied bit-exactly and marked non-trainable;
    only the deconvolution is re-initialized, with the new stride, for
    subsequent fine-tuning.
    """
    if src.spec.kind != FSRCNN:
        raise ValueError(f"can only transplant FSRCNN models, got {src.spec.name}")
    init = init or InitPolicy()
    new_spec = replace(src.spec, scale=target_scale)
    rng = np.random.default_rng(rng_seed)
    layers = []
    for layer in src.layers:
        if isinstance(layer, ConvLayer):
            dup = ConvLayer(layer.weights.copy(), layer.bias.copy(), layer.stride)
            dup.trainable = False
            layers.append(dup)
        elif isinstance(layer, PReLULayer):
            dup = PReLULayer(layer.slopes.copy())
            dup.trainable = False
            layers.append(dup)
        else:
            w = rng.normal(0.0, init.deconv_std, layer.weights.shape).astype(DTYPE)
            layers.append(DeconvLayer(w, np.zeros(layer.out_channels, dtype=DTYPE),
                                      stride=target_scale))
    return Model(new_spec, layers)


# ---------------------------------------------------------------------------
# Weight file format.
#
#   magic "FSRC" | u32 version=1 | u8 kind | u32 d | u32 s | u32 m | u32 scale
#   per layer, in architecture order:
#       u8 layer code (0 conv, 1 deconv, 2 prelu)
#       u32 dims[4]   (conv: out,in,f,f; deconv: in,out,f,f; prelu: ch,0,0,0)
#       payload: f32le weights then biases (conv/deconv), or slopes (prelu)
#   u32 crc32 of everything before it
#
# All integers little-endian.  The header fully determines the expected
# layer sequence, so dims are redundant and verified on load.
# ---------------------------------------------------------------------------

MAGIC = b"FSRC"
FORMAT_VERSION = 1

_KIND_CODES = {k: i for i, k in enumerate(VALID_KINDS)}
_CODES_KIND = {i: k for k, i in _KIND_CODES.items()}
_LAYER_CODES = {"conv": 0, "deconv": 1, "prelu": 2}
_CODES_LAYER = {v: k for k, v in _LAYER_CODES.items()}


class FormatError(ValueError):
    """Malformed weight stream; `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def save(model: Model) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<IBIIII", FORMAT_VERSION, _KIND_CODES[model.spec.kind],
                       model.spec.d, model.spec.s, model.spec.m, model.spec.scale)
    for layer in model.layers:
        out += struct.pack("<B", _LAYER_CODES[layer.kind])
        if isinstance(layer, PReLULayer):
            dims = (layer.channels, 0, 0, 0)
            payload = (layer.slopes,)
        else:
            dims = layer.weights.shape
            payload = (layer.weights, layer.bias)
        out += struct.pack("<IIII", *dims)
        for arr in payload:
            out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated stream while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(DTYPE)


def load(data: bytes) -> Model:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic", 0)
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", r.pos - 4)
    kind_off = r.pos
    kind_code, d, s, m, scale = r.unpack("<BIIII", "header")
    if kind_code not in _CODES_KIND:
        raise FormatError(f"unknown architecture code {kind_code}", kind_off)
    try:
        spec = ArchitectureSpec(_CODES_KIND[kind_code], scale=scale, d=d, s=s, m=m)
    except ValueError as e:
        raise FormatError(str(e), kind_off) from e

    layers = []
    for ls in spec.layer_specs():
        rec_off = r.pos
        (code,) = r.unpack("<B", "layer code")
        if _CODES_LAYER.get(code) != ls.kind:
            raise FormatError(f"expected {ls.kind} layer, found code {code}", rec_off)
        dims = r.unpack("<IIII", "layer dims")
        if ls.kind == "prelu":
            if dims != (ls.out_channels, 0, 0, 0):
                raise FormatError(f"prelu dims {dims} disagree with "
                                  f"({ls.out_channels},0,0,0)", rec_off + 1)
            layers.append(PReLULayer(r.floats(ls.out_channels, "prelu slopes")))
            continue
        if ls.kind == "conv":
            want = (ls.out_channels, ls.in_channels, ls.filter_size, ls.filter_size)
        else:
            want = (ls.in_channels, ls.out_channels, ls.filter_size, ls.filter_size)
        if dims != want:
            raise FormatError(f"{ls.kind} dims {dims} disagree with {want}", rec_off + 1)
        w = r.floats(int(np.prod(dims)), f"{ls.kind} weights").reshape(dims)
        b = r.floats(ls.out_channels, f"{ls.kind} bias")
        if ls.kind == "conv":
            layers.append(ConvLayer(w, b))
        else:
            layers.append(DeconvLayer(w, b, stride=spec.scale))

    crc_off = r.pos
    (crc,) = r.unpack("<I", "checksum")
    if crc != zlib.crc32(data[:crc_off]):
        raise FormatError("checksum mismatch", crc_off)
    if r.pos != len(data):
        raise FormatError("trailing bytes after checksum", r.pos)
    return Model(spec, layers)


def save_file(model: Model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save(model))


def load_file(path) -> Model:
    with open(path, "rb") as fh:
        return load(fh.read())
