"""Shallow CNN head: 1x1 conv(s) -> relu -> 2x2 max-pool -> fc1 -> relu -> fc2 -> softmax.

Used both as a dimension reducer for large tap outputs and as a classifier
trained from scratch per dataset. Gradients are written out by hand.
"""

from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import InvalidConfig, ShapeMismatch
from .nn_ops import (
    ConvParams,
    conv1x1_backward,
    conv2d,
    fc_backward,
    fc_forward,
    maxpool2d,
    maxpool_backward,
    output_extent,
    relu_backward,
    softmax,
    softmax_ce,
    softmax_ce_backward,
)
from .tensor import relu

POOL = 2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise InvalidConfig("learning_rate/weight_decay must be >= 0 and momentum in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("epochs and batch_size must be positive")


@dataclass(frozen=True)
class SCNNHead:
    input_shape: tuple  # (C, H, W)
    num_classes: int
    params: dict = field(repr=False)  # name -> array, see param_names()

    @property
    def conv_channels(self):
        return tuple(self.params[f"{n}.weight"].shape[0] for n in conv_names(self.params))

    @property
    def fc_width(self):
        return self.params["scnn.fc1.weight"].shape[0]

    @property
    def pooled_shape(self):
        _, h, w = self.input_shape
        return (self.conv_channels[-1], output_extent(h, POOL, POOL, 0), output_extent(w, POOL, POOL, 0))

    def convs(self):
        return [ConvParams(self.params[f"{n}.weight"], self.params[f"{n}.bias"])
                for n in conv_names(self.params)]


def _conv_prefix(i):
    return "scnn.conv" if i == 0 else f"scnn.conv{i + 1}"


def conv_names(params):
    names = []
    while f"{_conv_prefix(len(names))}.weight" in params:
        names.append(_conv_prefix(len(names)))
    return names


def scnn_build(input_shape, num_classes, seed=0, conv_channels=(512,), fc_width=4096, dtype=np.float32):
    """He-normal weights, zero biases."""
    input_shape = tuple(int(s) for s in input_shape)
    if len(input_shape) != 3 or min(input_shape) < 1:
        raise InvalidConfig(f"input shape must be (C, H, W), got {input_shape}")
    if num_classes < 2:
        raise InvalidConfig("the head needs at least two classes")
    if not conv_channels or min(conv_channels) < 1 or fc_width < 1:
        raise InvalidConfig("conv_channels and fc_width must be positive")
    c, h, w = input_shape
    if h < POOL or w < POOL:
        raise InvalidConfig(f"spatial extent {h}x{w} is smaller than the {POOL}x{POOL} pool")
    rng = np.random.default_rng(seed)
    params = {}
    in_ch = c
    for i, out_ch in enumerate(conv_channels):
        prefix = _conv_prefix(i)
        params[f"{prefix}.weight"] = rng.standard_normal((out_ch, in_ch, 1, 1)) * np.sqrt(2.0 / in_ch)
        params[f"{prefix}.bias"] = np.zeros(out_ch)
        in_ch = out_ch
    flat = in_ch * output_extent(h, POOL, POOL, 0) * output_extent(w, POOL, POOL, 0)
    params["scnn.fc1.weight"] = rng.standard_normal((fc_width, flat)) * np.sqrt(2.0 / flat)
    params["scnn.fc1.bias"] = np.zeros(fc_width)
    params["scnn.fc2.weight"] = rng.standard_normal((num_classes, fc_width)) * np.sqrt(2.0 / fc_width)
    params["scnn.fc2.bias"] = np.zeros(num_classes)
    return SCNNHead(input_shape, int(num_classes), {k: v.astype(dtype) for k, v in params.items()})


def _as_batch(h: SCNNHead, x):
    x = np.asarray(x)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or tuple(x.shape[1:]) != h.input_shape:
        raise ShapeMismatch(f"head expects input {h.input_shape}, got {x.shape[-3:] if x.ndim >= 3 else x.shape}")
    return x, single


def _forward(h: SCNNHead, x):
    cache = {"conv_in": [], "conv_out": []}
    out = x
    for p in h.convs():
        cache["conv_in"].append(out)
        out = conv2d(out, p)
        cache["conv_out"].append(out)
        out = relu(out)
    cache["pool_in"] = out
    out = maxpool2d(out, POOL, POOL)
    cache["pooled_shape"] = out.shape
    flat = out.reshape(out.shape[0], -1)
    cache["fc1_in"] = flat
    hidden = fc_forward(flat, h.params["scnn.fc1.weight"], h.params["scnn.fc1.bias"])
    cache["fc1_out"] = hidden
    hidden = relu(hidden)
    cache["fc2_in"] = hidden
    logits = fc_forward(hidden, h.params["scnn.fc2.weight"], h.params["scnn.fc2.bias"])
    return logits, cache


def scnn_forward(h: SCNNHead, x):
    xb, single = _as_batch(h, x)
    logits, _ = _forward(h, xb)
    return logits[0] if single else logits


def loss_and_gradients(h: SCNNHead, x, labels):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    xb, _ = _as_batch(h, x)
    labels = np.atleast_1d(np.asarray(labels))
    logits, cache = _forward(h, xb)
    losses, probs = softmax_ce(logits, labels)
    batch = xb.shape[0]
    grads = {}
    g = softmax_ce_backward(probs, labels) / batch
    g, grads["scnn.fc2.weight"], grads["scnn.fc2.bias"] = fc_backward(cache["fc2_in"], h.params["scnn.fc2.weight"], g)
    g = relu_backward(cache["fc1_out"], g)
    g, grads["scnn.fc1.weight"], grads["scnn.fc1.bias"] = fc_backward(cache["fc1_in"], h.params["scnn.fc1.weight"], g)
    g = g.reshape(cache["pooled_shape"])
    g = maxpool_backward(cache["pool_in"], POOL, POOL, g)
    names = conv_names(h.params)
    convs = h.convs()
    for i in reversed(range(len(convs))):
        g = relu_backward(cache["conv_out"][i], g)
        g, gw, gb = conv1x1_backward(cache["conv_in"][i], convs[i], g)
        grads[f"{names[i]}.weight"] = gw
        grads[f"{names[i]}.bias"] = gb
    return float(np.mean(losses)), grads


def scnn_predict(h: SCNNHead, x):
    """(label, probs); batched input gives arrays. Ties go to the lower class index."""
    logits = scnn_forward(h, x)
    probs = softmax(logits).astype(logits.dtype)
    return np.argmax(probs, axis=-1), probs


def scnn_train(h: SCNNHead, X, y, cfg: TrainConfig = TrainConfig(), callback=None):
    """Minibatch SGD with momentum. Returns (trained head, per-epoch mean loss)."""
    X = np.asarray(X)
    y = np.asarray(y).astype(np.int64)
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise InvalidConfig(f"need a nonempty dataset with one label per sample, got {X.shape[0]} / {y.shape[0]}")
    if y.min() < 0 or y.max() >= h.num_classes:
        raise InvalidConfig(f"labels must lie in [0, {h.num_classes})")
    dtype = h.params["scnn.fc1.weight"].dtype
    X = X.astype(dtype, copy=False)
    params = {k: v.copy() for k, v in h.params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.default_rng(cfg.seed)
    losses = []
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            current = SCNNHead(h.input_shape, h.num_classes, params)
            loss, grads = loss_and_gradients(current, X[idx], y[idx])
            total += loss * idx.size
            for name, grad in grads.items():
                if cfg.weight_decay and name.endswith(".weight"):
                    grad = grad + cfg.weight_decay * params[name]
                v = velocity[name]
                v *= cfg.momentum
                v -= cfg.learning_rate * grad
                params[name] += v
        losses.append(total / n)
        if callback is not None:
            callback(epoch, losses[-1])
    return SCNNHead(h.input_shape, h.num_classes, params), losses


def save_scnn(h: SCNNHead, path, classes=None, cfg: TrainConfig = None):
    container.save(path, h.params)
    meta = {
        "input_shape": "x".join(str(s) for s in h.input_shape),
        "num_classes": h.num_classes,
        "classes": ",".join(str(c) for c in (classes if classes is not None else range(h.num_classes))),
    }
    if cfg is not None:
        meta.update({f"train.{k}": v for k, v in vars(cfg).items()})
    container.save_meta(path, meta)


def load_scnn(path):
    from .errors import MetaMismatch

    params = container.load(path)
    meta = container.load_meta(path)
    try:
        shape = tuple(int(s) for s in meta["input_shape"].split("x"))
        k = int(meta["num_classes"])
    except (KeyError, ValueError) as exc:
        raise MetaMismatch(f"{path}: bad sidecar ({exc})") from None
    required = {"scnn.conv.weight", "scnn.fc1.weight"}
    if not required <= set(params) or len(shape) != 3:
        raise MetaMismatch(f"{path}: entries do not form a head")
    head = SCNNHead(shape, k, params)
    expected = scnn_build(shape, k, conv_channels=head.conv_channels, fc_width=head.fc_width)
    if set(expected.params) != set(params):
        raise MetaMismatch(f"{path}: entries do not form a head")
    for name, arr in expected.params.items():
        if params[name].shape != arr.shape:
            raise ShapeMismatch(f"{path}: {name} has shape {params[name].shape}, expected {arr.shape}")
    return head
