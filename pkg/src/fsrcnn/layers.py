"""Forward and backward passes for the three layer kinds of the network.

Convolution is cross-correlation (no kernel flip) with zero padding of
floor(f/2), so stride-1 layers preserve spatial size.  Transposed
convolution (deconvolution) is implemented as the exact adjoint of a
strided convolution with the same kernel: the forward pass of one is the
input-gradient pass of the other.  Both directions share the two kernels
below, `_corr_gather` (im2col + GEMM) and `_corr_scatter` (col2im), so
the adjoint identity holds by construction and speed comes from BLAS.

All arrays are float32 NCHW.  Layers hold their parameters but no
activation state; `backward` takes the original input.  Parameters are
read-only during forward/backward, so one layer can serve concurrent
inputs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DTYPE


def _pad2d(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _corr_gather(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None,
                 stride: int, pad: int) -> np.ndarray:
    """Strided cross-correlation of x (N,C,H,W) with w (O,C,f,f)."""
    f = w.shape[2]
    xp = _pad2d(x, pad)
    if xp.shape[2] < f or xp.shape[3] < f:
        raise ValueError(f"input {x.shape[2:]} too small for {f}x{f} kernel with pad {pad}")
    win = sliding_window_view(xp, (f, f), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    if bias is not None:
        y += bias.reshape(1, -1, 1, 1)
    return y


def _corr_scatter(gy: np.ndarray, w: np.ndarray, stride: int, pad: int,
                  out_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of `_corr_gather`: scatter gy (N,O,h,w) back through w (O,C,f,f).

    Returns an (N,C,out_h,out_w) map; out_hw is the spatial size before the
    virtual padding is stripped.  Fixed loop order over the f*f kernel
    positions keeps the accumulation deterministic.
    """
    n, _, ho, wo = gy.shape
    c, f = w.shape[1], w.shape[2]
    h, ww = out_hw
    gx = np.zeros((n, c, h + 2 * pad, ww + 2 * pad), dtype=DTYPE)
    cols = np.tensordot(gy, w, axes=([1], [0]))            # (n,ho,wo,c,f,f)
    cols = np.ascontiguousarray(cols.transpose(0, 3, 4, 5, 1, 2))
    for i in range(f):
        for j in range(f):
            gx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    if pad == 0:
        return gx
    return np.ascontiguousarray(gx[:, :, pad:pad + h, pad:pad + ww])


def _corr_weight_grad(x: np.ndarray, gy: np.ndarray, stride: int, pad: int,
                      f: int) -> np.ndarray:
    """d(sum gy * corr(x,w)) / dw for x (N,C,H,W), gy (N,O,h,w)."""
    xp = _pad2d(x, pad)
    win = sliding_window_view(xp, (f, f), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    gw = np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))
    return np.ascontiguousarray(gw)


class ConvLayer:
    """Convolution with square f x f kernels and same-size zero padding.

    weights: (out_ch, in_ch, f, f); bias: (out_ch,); stride 1 everywhere in
    the networks here, larger strides exist for the adjoint pairing with
    the deconvolution layer.
    """

    kind = "conv"

    def __init__(self, weights: np.ndarray, bias: np.ndarray, stride: int = 1):
        weights = np.ascontiguousarray(weights, dtype=DTYPE)
        bias = np.ascontiguousarray(bias, dtype=DTYPE)
        if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
            raise ValueError(f"conv weights must be (out,in,f,f), got {weights.shape}")
        if bias.shape != (weights.shape[0],):
            raise ValueError(f"bias length {bias.shape} does not match {weights.shape[0]} filters")
        if stride < 1:
            raise ValueError("stride must be positive")
        self.weights = weights
        self.bias = bias
        self.stride = stride
        self.zero_pad = weights.shape[2] // 2
        self.trainable = True

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def filter_size(self) -> int:
        return self.weights.shape[2]

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (N,{self.in_channels},H,W) input, got {x.shape}")

    def out_shape(self, x_shape: tuple[int, ...]) -> tuple[int, int, int, int]:
        n, _, h, w = x_shape
        f, s, p = self.filter_size, self.stride, self.zero_pad
        return (n, self.out_channels, (h + 2 * p - f) // s + 1, (w + 2 * p - f) // s + 1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check_input(x)
        return _corr_gather(x, self.weights, self.bias, self.stride, self.zero_pad)

    def backward(self, x: np.ndarray, grad_out: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gradients of sum(grad_out * forward(x)) wrt input, weights, bias."""
        self._check_input(x)
        if grad_out.shape != self.out_shape(x.shape):
            raise ValueError(f"grad_out shape {grad_out.shape} does not match "
                             f"forward output {self.out_shape(x.shape)}")
        grad_in = _corr_scatter(grad_out, self.weights, self.stride,
                                self.zero_pad, x.shape[2:])
        grad_w = _corr_weight_grad(x, grad_out, self.stride, self.zero_pad,
                                   self.filter_size)
        grad_b = grad_out.sum(axis=(0, 2, 3), dtype=DTYPE)
        return grad_in, grad_w, grad_b


class DeconvLayer:
    """Transposed convolution: upsamples by its stride.

    weights: (in_ch, out_ch, f, f); crop of floor(f/2) per side, so an h x w
    input produces (stride*(h-1) + f - 2*crop) per side, which for f=9,
    crop=4 is stride*h - stride + 1.  Forward is the exact adjoint of a
    stride-n ConvLayer forward with the same kernel.
    """

    kind = "deconv"

    def __init__(self, weights: np.ndarray, bias: np.ndarray, stride: int):
        weights = np.ascontiguousarray(weights, dtype=DTYPE)
        bias = np.ascontiguousarray(bias, dtype=DTYPE)
        if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
            raise ValueError(f"deconv weights must be (in,out,f,f), got {weights.shape}")
        if bias.shape != (weights.shape[1],):
            raise ValueError(f"bias length {bias.shape} does not match {weights.shape[1]} outputs")
        if stride < 1:
            raise ValueError("stride must be positive")
        self.weights = weights
        self.bias = bias
        self.stride = stride
        self.crop = weights.shape[2] // 2
        self.trainable = True

    @property
    def in_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def filter_size(self) -> int:
        return self.weights.shape[2]

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (N,{self.in_channels},H,W) input, got {x.shape}")

    def out_shape(self, x_shape: tuple[int, ...]) -> tuple[int, int, int, int]:
        n, _, h, w = x_shape
        f, s, c = self.filter_size, self.stride, self.crop
        return (n, self.out_channels, s * (h - 1) + f - 2 * c, s * (w - 1) + f - 2 * c)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check_input(x)
        out_hw = self.out_shape(x.shape)[2:]
        y = _corr_scatter(x, self.weights, self.stride, self.crop, out_hw)
        y += self.bias.reshape(1, -1, 1, 1)
        return y

    def backward(self, x: np.ndarray, grad_out: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        self._check_input(x)
        if grad_out.shape != self.out_shape(x.shape):
            raise ValueError(f"grad_out shape {grad_out.shape} does not match "
                             f"forward output {self.out_shape(x.shape)}")
        # The adjoint of a scatter is the gather with the same kernel.
        grad_in = _corr_gather(grad_out, self.weights, None, self.stride, self.crop)
        grad_w = _corr_weight_grad(grad_out, x, self.stride, self.crop,
                                   self.filter_size)
        grad_b = grad_out.sum(axis=(0, 2, 3), dtype=DTYPE)
        return grad_in, grad_w, grad_b


class PReLULayer:
    """Per-channel parametric ReLU: max(x, 0) + slope[c] * min(x, 0).

    With all slopes zero this is exactly ReLU.  The gradient at x == 0
    takes the positive branch.
    """

    kind = "prelu"

    def __init__(self, slopes: np.ndarray):
        slopes = np.ascontiguousarray(slopes, dtype=DTYPE)
        if slopes.ndim != 1 or slopes.size == 0:
            raise ValueError(f"slopes must be a per-channel vector, got shape {slopes.shape}")
        self.slopes = slopes
        self.trainable = True

    @property
    def channels(self) -> int:
        return self.slopes.shape[0]

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected (N,{self.channels},H,W) input, got {x.shape}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check_input(x)
        a = self.slopes.reshape(1, -1, 1, 1)
        return np.where(x >= 0, x, a * x)

    def backward(self, x: np.ndarray, grad_out: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
        self._check_input(x)
        if grad_out.shape != x.shape:
            raise ValueError(f"grad_out shape {grad_out.shape} does not match input {x.shape}")
        a = self.slopes.reshape(1, -1, 1, 1)
        grad_in = np.where(x >= 0, grad_out, a * grad_out)
        grad_a = np.where(x < 0, grad_out * x, DTYPE(0)).sum(axis=(0, 2, 3), dtype=DTYPE)
        return grad_in, grad_a
