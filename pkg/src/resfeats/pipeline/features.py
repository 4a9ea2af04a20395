"""ResFeat extraction and the on-disk feature cache."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import container
from ..errors import CorruptFile, InvalidConfig, MetaMismatch, MissingTensor
from ..pca import PCAModel, pca_transform
from ..resnet import ResNetModel, TapName, forward_with_taps
from ..tensor import flatten
from .images import IMAGENET_MEAN, INPUT_SIZE, augment16, preprocess, read_ppm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureSet:
    features: np.ndarray  # (rows, dims) float32
    labels: np.ndarray  # (rows,) int64
    groups: np.ndarray  # (rows,) source image index; views of one image share it
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise MetaMismatch(f"features must be 2-d, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],) or self.groups.shape != self.labels.shape:
            raise MetaMismatch(
                f"{self.features.shape[0]} feature rows but {self.labels.size} labels / {self.groups.size} groups"
            )

    def __len__(self):
        return self.features.shape[0]

    @property
    def map_shape(self):
        """(C, H, W) of the unflattened tap output, when the rows are unreduced."""
        text = self.meta.get("shape")
        if not text or self.meta.get("reduction", "none") != "none":
            return None
        return tuple(int(s) for s in str(text).split("x"))

    def maps(self):
        shape = self.map_shape
        if shape is None:
            raise InvalidConfig("feature rows are reduced; spatial maps are unavailable")
        return self.features.reshape((len(self),) + shape)


def describe_preprocess(mean=IMAGENET_MEAN, size=INPUT_SIZE):
    return f"bilinear{size}/scale01/mean=" + ",".join(f"{m:g}" for m in mean)


_worker = {}


def _init_worker(model, tap, mean, augment):
    _worker.update(model=model, tap=tap, mean=mean, augment=augment)


def _image_rows(path):
    model, tap, mean = _worker["model"], _worker["tap"], _worker["mean"]
    image = read_ppm(path)
    views = augment16(image) if _worker["augment"] else [image]
    rows = []
    for view in views:
        out = forward_with_taps(model, preprocess(view, mean=mean), [tap])[tap]
        rows.append(flatten(out))
    return np.stack(rows), tuple(out.shape)


def extract_features(model: ResNetModel, samples, tap, reduction=None, augment=False,
                     workers=1, mean=IMAGENET_MEAN, extra_meta=None):
    """Rows follow ``samples`` order; with augmentation each image yields 16 consecutive rows.

    ``reduction`` is None (flattened tap output) or a fitted PCAModel.
    """
    tap = TapName.parse(tap)
    if not samples:
        raise InvalidConfig("no samples to extract")
    paths = [p for p, _ in samples]
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(model, tap, mean, augment)) as pool:
            results = list(pool.map(_image_rows, paths, chunksize=4))
    else:
        _init_worker(model, tap, mean, augment)
        results = []
        for i, path in enumerate(paths):
            results.append(_image_rows(path))
            if (i + 1) % 50 == 0:
                log.info("extracted %d/%d images", i + 1, len(paths))
    shape = results[0][1]
    features = np.concatenate([r for r, _ in results]).astype(np.float32)
    views = 16 if augment else 1
    labels = np.repeat(np.array([c for _, c in samples], dtype=np.int64), views)
    groups = np.repeat(np.arange(len(samples), dtype=np.int64), views)
    meta = {
        "tap": tap.value,
        "variant": model.variant.name,
        "preprocess": describe_preprocess(mean),
        "shape": "x".join(str(s) for s in shape),
        "views": views,
        "reduction": "none",
    }
    if extra_meta:
        meta.update(extra_meta)
    fs = FeatureSet(features, labels, groups, meta)
    return reduce_features(fs, reduction) if reduction is not None else fs


def reduce_features(fs: FeatureSet, pca: PCAModel):
    reduced = pca_transform(pca, fs.features).astype(np.float32)
    meta = dict(fs.meta, reduction=f"pca{pca.n}")
    return FeatureSet(reduced, fs.labels, fs.groups, meta)


def save_features(fs: FeatureSet, path):
    container.save(path, {
        "features": fs.features,
        "labels": fs.labels.astype(np.float32),
        "groups": fs.groups.astype(np.float32),
    })
    meta = dict(fs.meta)
    meta["rows"] = len(fs)
    meta["dims"] = fs.features.shape[1]
    container.save_meta(path, meta)


def load_features(path):
    entries = container.load(path)
    meta = container.load_meta(path)
    for name in ("features", "labels"):
        if name not in entries:
            raise MissingTensor(f"{path}: no {name!r} entry")
    features = entries["features"]
    if features.ndim != 2:
        raise CorruptFile(f"{path}: features entry has rank {features.ndim}")
    labels = entries["labels"]
    groups = entries.get("groups", np.arange(labels.size, dtype=np.float32))
    try:
        rows = int(meta["rows"])
        dims = int(meta["dims"])
    except (KeyError, ValueError) as exc:
        raise MetaMismatch(f"{path}: sidecar lacks rows/dims ({exc})") from None
    if rows != features.shape[0] or rows != labels.size or groups.size != rows:
        raise MetaMismatch(f"{path}: sidecar says {rows} rows, file holds {features.shape[0]} / {labels.size} labels")
    if dims != features.shape[1]:
        raise MetaMismatch(f"{path}: sidecar says {dims} dims, file holds {features.shape[1]}")
    meta.pop("rows")
    meta.pop("dims")
    return FeatureSet(features, labels.astype(np.int64), groups.astype(np.int64), meta)
