"""Bottleneck ResNets (ResNet-50/152 and small "mini" variants) with feature taps.

Parameter names in RFT1 weight files::

    stem.conv.weight                    stem.bn.{gamma,beta,mean,var}
    stage{S}.block{B}.conv{a,b,c}.weight
    stage{S}.block{B}.bn_{a,b,c}.{gamma,beta,mean,var}
    stage{S}.block{B}.shortcut.conv.weight
    stage{S}.block{B}.shortcut.bn.{gamma,beta,mean,var}
    head.fc.weight                      head.fc.bias

S runs 2..5 (conv2_x .. conv5_x) and B counts from 1, so the Res5c tap is
the output of ``stage5.block3`` in ResNet-50.
"""

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import container
from .errors import InvalidConfig, MissingTensor, ShapeMismatch, UnexpectedTensor
from .nn_ops import (
    BatchNormParams,
    ConvParams,
    batchnorm_infer,
    conv2d,
    fc_forward,
    global_avgpool,
    maxpool2d,
    output_extent,
)
from .tensor import add, relu

BN_EPSILON = 1e-5
FIRST_STAGE = 2


class TapName(enum.Enum):
    RES3D = "res3d"
    RES4F = "res4f"
    RES5C = "res5c"

    @property
    def stage(self):
        """Stage number in conv{S}_x terms."""
        return {"res3d": 3, "res4f": 4, "res5c": 5}[self.value]

    @property
    def channels(self):
        """Channel count d in ResNet-50/152."""
        return {"res3d": 512, "res4f": 1024, "res5c": 2048}[self.value]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidConfig(f"unknown tap {value!r}; expected one of res3d, res4f, res5c") from None


@dataclass(frozen=True)
class Variant:
    name: str
    stem_channels: int
    widths: tuple  # output (expanded) channels per stage
    depths: tuple  # blocks per stage
    num_classes: int = 1000

    def __post_init__(self):
        if len(self.widths) != 4 or len(self.depths) != 4:
            raise InvalidConfig("a ResNet variant needs exactly 4 stage widths and 4 depths")
        if any(w < 4 or w % 4 for w in self.widths):
            raise InvalidConfig(f"stage widths must be positive multiples of 4, got {self.widths}")
        if any(d < 1 for d in self.depths) or self.stem_channels < 1 or self.num_classes < 1:
            raise InvalidConfig("depths, stem width and class count must be positive")


RESNET50 = Variant("resnet50", 64, (256, 512, 1024, 2048), (3, 4, 6, 3))
RESNET152 = Variant("resnet152", 64, (256, 512, 1024, 2048), (3, 8, 36, 3))


def mini(widths=(16, 32, 64, 128), depths=(1, 1, 1, 1), num_classes=10):
    widths = tuple(int(w) for w in widths)
    if not widths or widths[0] < 4:
        raise InvalidConfig(f"bad mini widths {widths}")
    return Variant("mini", max(1, widths[0] // 4), widths, tuple(int(d) for d in depths), num_classes)


def variant_from_name(name, widths=None, depths=None):
    name = name.lower()
    if name == "resnet50":
        return RESNET50
    if name == "resnet152":
        return RESNET152
    if name == "mini":
        return mini(widths or (16, 32, 64, 128), depths or (1, 1, 1, 1))
    raise InvalidConfig(f"unknown variant {name!r}")


@dataclass(frozen=True)
class Projection:
    conv: ConvParams
    bn: BatchNormParams


@dataclass(frozen=True)
class BottleneckBlock:
    conv_a: ConvParams
    bn_a: BatchNormParams
    conv_b: ConvParams
    bn_b: BatchNormParams
    conv_c: ConvParams
    bn_c: BatchNormParams
    shortcut: Optional[Projection] = None  # None is the identity shortcut

    def __post_init__(self):
        reduce = self.conv_a.out_channels
        if self.conv_c.out_channels != 4 * reduce:
            raise InvalidConfig(f"bottleneck must expand {reduce} -> {4 * reduce}, got {self.conv_c.out_channels}")
        identity_ok = self.conv_a.in_channels == self.conv_c.out_channels and self.stride == 1
        if self.shortcut is None and not identity_ok:
            raise InvalidConfig("identity shortcut requires equal input and output shapes")
        if self.shortcut is not None and identity_ok:
            raise InvalidConfig("projection shortcut is only used when the shape changes")

    @property
    def stride(self):
        return self.conv_b.stride


@dataclass(frozen=True)
class ResNetModel:
    variant: Variant
    stem_conv: ConvParams
    stem_bn: BatchNormParams
    stages: tuple  # 4 tuples of BottleneckBlock
    fc_weight: np.ndarray
    fc_bias: np.ndarray
    taps: tuple = field(default=tuple(TapName))

    def tap_channels(self, tap):
        return self.variant.widths[TapName.parse(tap).stage - FIRST_STAGE]

    def output_shapes(self, height, width):
        """Predicted (C, H, W) after each stage for an input of the given size."""
        h = output_extent(height, 7, 2, 3)
        w = output_extent(width, 7, 2, 3)
        h, w = output_extent(h, 3, 2, 1), output_extent(w, 3, 2, 1)
        shapes = {}
        for i, width_c in enumerate(self.variant.widths):
            if i > 0:
                h, w = output_extent(h, 3, 2, 1), output_extent(w, 3, 2, 1)
            shapes[i + FIRST_STAGE] = (width_c, h, w)
        return shapes


def _bn_names(prefix):
    return {k: f"{prefix}.{k}" for k in ("gamma", "beta", "mean", "var")}


def parameter_shapes(variant: Variant):
    """Ordered mapping of every parameter name to its shape."""
    shapes = {"stem.conv.weight": (variant.stem_channels, 3, 7, 7)}
    for name in _bn_names("stem.bn").values():
        shapes[name] = (variant.stem_channels,)
    in_ch = variant.stem_channels
    for s, (width, depth) in enumerate(zip(variant.widths, variant.depths)):
        reduce = width // 4
        for b in range(depth):
            prefix = f"stage{s + FIRST_STAGE}.block{b + 1}"
            shapes[f"{prefix}.conva.weight"] = (reduce, in_ch, 1, 1)
            shapes[f"{prefix}.convb.weight"] = (reduce, reduce, 3, 3)
            shapes[f"{prefix}.convc.weight"] = (width, reduce, 1, 1)
            for part, ch in (("a", reduce), ("b", reduce), ("c", width)):
                for name in _bn_names(f"{prefix}.bn_{part}").values():
                    shapes[name] = (ch,)
            if b == 0:
                shapes[f"{prefix}.shortcut.conv.weight"] = (width, in_ch, 1, 1)
                for name in _bn_names(f"{prefix}.shortcut.bn").values():
                    shapes[name] = (width,)
            in_ch = width
    shapes["head.fc.weight"] = (variant.num_classes, variant.widths[-1])
    shapes["head.fc.bias"] = (variant.num_classes,)
    return shapes


def _bn_from(params, prefix):
    n = _bn_names(prefix)
    return BatchNormParams(params[n["gamma"]], params[n["beta"]], params[n["mean"]], params[n["var"]], BN_EPSILON)


def model_from_state(variant: Variant, params):
    """Bind a complete, shape-checked parameter mapping to a model."""
    expected = parameter_shapes(variant)
    missing = [k for k in expected if k not in params]
    if missing:
        raise MissingTensor(f"missing {len(missing)} tensor(s), first: {missing[0]}")
    extra = sorted(k for k in params if k not in expected)
    if extra:
        raise UnexpectedTensor(f"unexpected tensor(s): {', '.join(extra[:5])}")
    bound = {}
    for name, shape in expected.items():
        arr = np.ascontiguousarray(params[name], dtype=np.float32)
        if arr.shape != shape:
            raise ShapeMismatch(f"{name}: expected shape {shape}, got {arr.shape}")
        bound[name] = arr
    if any(np.any(v < 0) for k, v in bound.items() if k.endswith(".var")):
        raise InvalidConfig("batch-norm running variances must be nonnegative")

    stages = []
    for s, depth in enumerate(variant.depths):
        blocks = []
        for b in range(depth):
            prefix = f"stage{s + FIRST_STAGE}.block{b + 1}"
            stride = 2 if (b == 0 and s > 0) else 1
            shortcut = None
            if b == 0:
                shortcut = Projection(
                    ConvParams(bound[f"{prefix}.shortcut.conv.weight"], stride=stride),
                    _bn_from(bound, f"{prefix}.shortcut.bn"),
                )
            blocks.append(BottleneckBlock(
                conv_a=ConvParams(bound[f"{prefix}.conva.weight"]),
                bn_a=_bn_from(bound, f"{prefix}.bn_a"),
                conv_b=ConvParams(bound[f"{prefix}.convb.weight"], stride=stride, padding=1),
                bn_b=_bn_from(bound, f"{prefix}.bn_b"),
                conv_c=ConvParams(bound[f"{prefix}.convc.weight"]),
                bn_c=_bn_from(bound, f"{prefix}.bn_c"),
                shortcut=shortcut,
            ))
        stages.append(tuple(blocks))
    return ResNetModel(
        variant=variant,
        stem_conv=ConvParams(bound["stem.conv.weight"], stride=2, padding=3),
        stem_bn=_bn_from(bound, "stem.bn"),
        stages=tuple(stages),
        fc_weight=bound["head.fc.weight"],
        fc_bias=bound["head.fc.bias"],
    )


def state_dict(model: ResNetModel):
    def put_bn(out, prefix, bn):
        out[f"{prefix}.gamma"] = bn.gamma
        out[f"{prefix}.beta"] = bn.beta
        out[f"{prefix}.mean"] = bn.running_mean
        out[f"{prefix}.var"] = bn.running_var

    out = {"stem.conv.weight": model.stem_conv.weights}
    put_bn(out, "stem.bn", model.stem_bn)
    for s, blocks in enumerate(model.stages):
        for b, blk in enumerate(blocks):
            prefix = f"stage{s + FIRST_STAGE}.block{b + 1}"
            out[f"{prefix}.conva.weight"] = blk.conv_a.weights
            out[f"{prefix}.convb.weight"] = blk.conv_b.weights
            out[f"{prefix}.convc.weight"] = blk.conv_c.weights
            put_bn(out, f"{prefix}.bn_a", blk.bn_a)
            put_bn(out, f"{prefix}.bn_b", blk.bn_b)
            put_bn(out, f"{prefix}.bn_c", blk.bn_c)
            if blk.shortcut is not None:
                out[f"{prefix}.shortcut.conv.weight"] = blk.shortcut.conv.weights
                put_bn(out, f"{prefix}.shortcut.bn", blk.shortcut.bn)
    out["head.fc.weight"] = model.fc_weight
    out["head.fc.bias"] = model.fc_bias
    # keep the documented ordering
    return {k: out[k] for k in parameter_shapes(model.variant)}


def random_state(variant: Variant, seed=0):
    """He-normal conv weights and identity batch-norm statistics.

    The last batch-norm of every residual branch gets gamma 0.5 so that
    activations stay bounded through deep random stacks.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(variant).items():
        if name.endswith(".weight") and len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif name == "head.fc.weight":
            params[name] = rng.standard_normal(shape) * np.sqrt(1.0 / shape[1])
        elif name.endswith(".gamma"):
            params[name] = np.full(shape, 0.5 if ".bn_c." in name else 1.0)
        elif name.endswith(".var"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return {k: v.astype(np.float32) for k, v in params.items()}


def build_resnet(variant, seed=0):
    """Model for a variant (a Variant or one of "resnet50", "resnet152", "mini")
    with seeded random weights; use load_weights to bind trained ones."""
    if isinstance(variant, str):
        variant = variant_from_name(variant)
    return model_from_state(variant, random_state(variant, seed))


def save_weights(model: ResNetModel, path):
    container.save(path, state_dict(model))


def load_weights(model: ResNetModel, path):
    return model_from_state(model.variant, container.load(path))


def block_forward(x, b: BottleneckBlock):
    if x.shape[-3] != b.conv_a.in_channels:
        raise ShapeMismatch(f"block expects {b.conv_a.in_channels} input channels, got {x.shape[-3]}")
    out = relu(batchnorm_infer(conv2d(x, b.conv_a), b.bn_a))
    out = relu(batchnorm_infer(conv2d(out, b.conv_b), b.bn_b))
    out = batchnorm_infer(conv2d(out, b.conv_c), b.bn_c)
    short = x if b.shortcut is None else batchnorm_infer(conv2d(x, b.shortcut.conv), b.shortcut.bn)
    return relu(add(short, out))


def stem_forward(model: ResNetModel, image):
    out = relu(batchnorm_infer(conv2d(image, model.stem_conv), model.stem_bn))
    return maxpool2d(out, 3, 2, padding=1)


def forward_with_taps(model: ResNetModel, image, taps, head=False):
    """Run the network up to the deepest requested tap.

    Returns a dict TapName -> post-relu output of that stage's last block.
    With ``head=True`` the classifier runs too and its logits are stored
    under the key "logits".
    """
    taps = {TapName.parse(t) for t in taps}
    if not taps and not head:
        raise InvalidConfig("request at least one tap")
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatch(f"expected a 3xHxW image, got {image.shape}")
    if min(image.shape[1:]) < 32:
        raise InvalidConfig(f"image must be at least 32x32, got {image.shape[1:]}")
    last = 5 if head else max(t.stage for t in taps)
    wanted = {t.stage: t for t in taps}
    out = stem_forward(model, image)
    result = {}
    for s, blocks in enumerate(model.stages):
        stage = s + FIRST_STAGE
        if stage > last:
            break
        for blk in blocks:
            out = block_forward(out, blk)
        if stage in wanted:
            result[wanted[stage]] = out
    if head:
        result["logits"] = fc_forward(global_avgpool(out), model.fc_weight, model.fc_bias)
    return result
