"""Forward kernels for ResNet inference plus the backward kernels of the sCNN head.

Image-like inputs are (C, H, W) or batched (B, C, H, W). Arithmetic runs in
float64; results come back as float32 unless an input was already float64.
Convolution is cross-correlation with symmetric zero padding, im2col style.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import IndexOutOfRange, InvalidGeometry, ShapeMismatch, UnsupportedGeometry
from .tensor import float_dtype


@dataclass(frozen=True)
class ConvParams:
    weights: np.ndarray  # (out_channels, in_channels, kH, kW)
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weights.ndim != 4 or min(self.weights.shape) < 1:
            raise ShapeMismatch(f"conv weights must be 4-d with extents >= 1, got {self.weights.shape}")
        if self.bias is not None and self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatch(f"conv bias {self.bias.shape} does not match {self.weights.shape[0]} outputs")
        if self.stride < 1 or self.padding < 0:
            raise InvalidGeometry(f"bad stride/padding {self.stride}/{self.padding}")

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel(self):
        return self.weights.shape[2:]


@dataclass(frozen=True)
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        n = self.gamma.shape
        if len(n) != 1 or any(v.shape != n for v in (self.beta, self.running_mean, self.running_var)):
            raise ShapeMismatch("batch-norm parameter vectors must share one length")
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def channels(self):
        return self.gamma.shape[0]


def output_extent(size, kernel, stride, padding):
    """Floor-mode output length of a convolution or pooling window."""
    return (size + 2 * padding - kernel) // stride + 1


def _batched(x, rank):
    x = np.asarray(x)
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeMismatch(f"expected a rank-{rank} input (or batch of them), got shape {x.shape}")


def _unbatch(out, single):
    return out[0] if single else out


def _windows(x, kh, kw, stride, padding, fill):
    """(B, C, H', W', kh, kw) strided view over the padded input."""
    _, _, h, w = x.shape
    oh = output_extent(h, kh, stride, padding)
    ow = output_extent(w, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise InvalidGeometry(
            f"window {kh}x{kw} stride {stride} pad {padding} does not fit input {h}x{w}"
        )
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=fill)
    view = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return view[:, :, ::stride, ::stride][:, :, :oh, :ow]


def conv2d(x, p: ConvParams):
    xb, single = _batched(x, 3)
    if xb.shape[1] != p.in_channels:
        raise ShapeMismatch(f"conv2d: input has {xb.shape[1]} channels, kernel expects {p.in_channels}")
    dtype = float_dtype(xb, p.weights)
    kh, kw = p.kernel
    win = _windows(xb.astype(np.float64, copy=False), kh, kw, p.stride, p.padding, 0.0)
    # contracts (C, kh, kw); tensordot materializes the im2col matrix
    out = np.tensordot(win, p.weights.astype(np.float64, copy=False), axes=([1, 4, 5], [1, 2, 3]))
    out = np.moveaxis(out, 3, 1)
    if p.bias is not None:
        out = out + p.bias.astype(np.float64, copy=False)[None, :, None, None]
    return _unbatch(np.ascontiguousarray(out, dtype=dtype), single)


def batchnorm_infer(x, p: BatchNormParams):
    xb, single = _batched(x, 3)
    if xb.shape[1] != p.channels:
        raise ShapeMismatch(f"batchnorm: input has {xb.shape[1]} channels, parameters have {p.channels}")
    dtype = float_dtype(xb, p.gamma)
    scale = p.gamma.astype(np.float64, copy=False) / np.sqrt(p.running_var.astype(np.float64, copy=False) + p.epsilon)
    shift = p.beta.astype(np.float64, copy=False) - p.running_mean.astype(np.float64, copy=False) * scale
    out = xb.astype(np.float64, copy=False) * scale[None, :, None, None] + shift[None, :, None, None]
    return _unbatch(out.astype(dtype), single)


def relu_backward(x, grad_out):
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype)


def maxpool2d(x, k, stride, padding=0):
    xb, single = _batched(x, 3)
    if padding > k // 2:
        raise InvalidGeometry(f"pool padding {padding} exceeds half the window {k}")
    win = _windows(xb, k, k, stride, padding, -np.inf)
    return _unbatch(np.ascontiguousarray(win.max(axis=(4, 5))), single)


def maxpool_backward(x, k, stride, grad_out, padding=0):
    """Route each output gradient to its window's argmax (first in row-major order on ties)."""
    xb, single = _batched(x, 3)
    gb, _ = _batched(grad_out, 3)
    if padding > k // 2:
        raise InvalidGeometry(f"pool padding {padding} exceeds half the window {k}")
    win = _windows(xb, k, k, stride, padding, -np.inf)
    b, c, oh, ow = win.shape[:4]
    if gb.shape != (b, c, oh, ow):
        raise ShapeMismatch(f"maxpool_backward: grad_out {gb.shape} != pooled shape {(b, c, oh, ow)}")
    arg = win.reshape(b, c, oh, ow, k * k).argmax(axis=-1)
    rows = np.arange(oh)[None, None, :, None] * stride + arg // k
    cols = np.arange(ow)[None, None, None, :] * stride + arg % k
    h, w = xb.shape[2:]
    grad = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=gb.dtype)
    bi = np.arange(b)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    np.add.at(grad, (bi, ci, rows, cols), gb)
    grad = grad[:, :, padding:padding + h, padding:padding + w]
    return _unbatch(np.ascontiguousarray(grad), single)


def global_avgpool(x):
    xb, single = _batched(x, 3)
    out = xb.astype(np.float64, copy=False).mean(axis=(2, 3))
    return _unbatch(out.astype(float_dtype(xb)), single)


def fc_forward(x, weights, bias):
    xb, single = _batched(x, 1)
    m, n = weights.shape
    if xb.shape[1] != n or bias.shape != (m,):
        raise ShapeMismatch(f"fc: input {xb.shape[1:]} / bias {bias.shape} incompatible with weights {weights.shape}")
    dtype = float_dtype(xb, weights)
    out = xb.astype(np.float64, copy=False) @ weights.astype(np.float64, copy=False).T + bias.astype(np.float64, copy=False)
    return _unbatch(out.astype(dtype), single)


def fc_backward(x, weights, grad_out):
    """Returns (grad_input, grad_weights, grad_bias); parameter grads are summed over the batch."""
    xb, single = _batched(x, 1)
    gb, _ = _batched(grad_out, 1)
    m, n = weights.shape
    if xb.shape[1] != n or gb.shape != (xb.shape[0], m):
        raise ShapeMismatch(f"fc_backward: input {xb.shape} / grad {gb.shape} vs weights {weights.shape}")
    dtype = float_dtype(xb, weights, gb)
    g64 = gb.astype(np.float64, copy=False)
    grad_in = g64 @ weights.astype(np.float64, copy=False)
    grad_w = g64.T @ xb.astype(np.float64, copy=False)
    grad_b = g64.sum(axis=0)
    return _unbatch(grad_in.astype(dtype), single), grad_w.astype(dtype), grad_b.astype(dtype)


def conv1x1_backward(x, p: ConvParams, grad_out):
    """Returns (grad_input, grad_weights, grad_bias) for a 1x1, stride-1, unpadded conv."""
    if p.kernel != (1, 1) or p.stride != 1 or p.padding != 0:
        raise UnsupportedGeometry("backward is only implemented for 1x1 kernels with stride 1 and no padding")
    xb, single = _batched(x, 3)
    gb, _ = _batched(grad_out, 3)
    if xb.shape[1] != p.in_channels or gb.shape != (xb.shape[0], p.out_channels) + xb.shape[2:]:
        raise ShapeMismatch(f"conv1x1_backward: input {xb.shape} / grad {gb.shape} vs weights {p.weights.shape}")
    dtype = float_dtype(xb, p.weights, gb)
    w64 = p.weights[:, :, 0, 0].astype(np.float64, copy=False)
    g64 = gb.astype(np.float64, copy=False)
    b, o, h, w = g64.shape
    grad_in = np.matmul(w64.T, g64.reshape(b, o, h * w)).reshape(b, -1, h, w)
    grad_w = np.tensordot(g64, xb.astype(np.float64, copy=False), axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
    grad_b = g64.sum(axis=(0, 2, 3))
    return _unbatch(grad_in.astype(dtype), single), grad_w.astype(dtype), grad_b.astype(dtype)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_ce(logits, label):
    """Stable softmax cross-entropy.

    For a (k,) logit vector and integer label returns ``(loss, probs)``. A
    (B, k) batch with a label array returns per-sample losses.
    """
    logits = np.asarray(logits)
    k = logits.shape[-1]
    labels = np.asarray(label)
    if labels.shape != logits.shape[:-1]:
        raise ShapeMismatch(f"softmax_ce: labels {labels.shape} vs logits {logits.shape}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise IndexOutOfRange(f"label out of range [0, {k})")
    z = logits.astype(np.float64, copy=False)
    z = z - z.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, labels[..., None].astype(np.intp), axis=-1)[..., 0]
    loss = log_norm - picked
    probs = np.exp(z - log_norm[..., None]).astype(float_dtype(logits))
    if logits.ndim == 1:
        return float(loss), probs
    return loss, probs


def softmax_ce_backward(probs, label):
    """Gradient of the cross-entropy loss with respect to the logits."""
    grad = np.array(probs, copy=True)
    labels = np.asarray(label)
    if grad.ndim == 1:
        grad[int(labels)] -= 1
    else:
        grad[np.arange(grad.shape[0]), labels] -= 1
    return grad
