"""Class-per-directory image datasets and reproducible per-class splits."""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import EmptyClass, InsufficientSamples, InvalidConfig, NoClasses
from .images import read_ppm

IMAGE_SUFFIXES = (".ppm", ".pnm")
PARTS = ("train", "val", "test")


@dataclass(frozen=True)
class Dataset:
    root: Path
    classes: tuple
    samples: tuple  # (path, class_index) in class then filename order
    assignment: Optional[tuple] = None  # "train" / "val" / "test" per sample
    per_class_train: Optional[int] = None
    per_class_val: Optional[int] = None
    seed: Optional[int] = None

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self):
        return np.array([c for _, c in self.samples], dtype=np.int64)

    def part(self, name):
        """Samples of one split part, or all of them for "all"."""
        if name == "all":
            return list(self.samples)
        if name not in PARTS:
            raise InvalidConfig(f"unknown split part {name!r}")
        if self.assignment is None:
            raise InvalidConfig("dataset has not been split")
        return [s for s, a in zip(self.samples, self.assignment) if a == name]


def ingest(root, check_decode=True):
    """One subdirectory per class, sorted lexicographically; PPM files sorted likewise."""
    root = Path(root)
    if not root.is_dir():
        raise NoClasses(f"{root} is not a directory")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not classes:
        raise NoClasses(f"{root} has no class subdirectories")
    samples = []
    for index, name in enumerate(classes):
        files = sorted(
            p for p in (root / name).iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise EmptyClass(f"class directory {root / name} contains no images")
        for path in files:
            if check_decode:
                read_ppm(path)
            samples.append((path, index))
    return Dataset(root, tuple(classes), tuple(samples))


def split(d: Dataset, per_class_train, per_class_val=0, seed=0):
    """Per class, draw train then val without replacement; the rest is test."""
    if per_class_train < 0 or per_class_val < 0:
        raise InvalidConfig("per-class counts must be nonnegative")
    rng = np.random.default_rng(seed)
    labels = d.labels
    assignment = np.empty(len(d), dtype=object)
    for index, name in enumerate(d.classes):
        idx = np.flatnonzero(labels == index)
        if idx.size <= per_class_train + per_class_val:
            raise InsufficientSamples(
                f"class {name!r} has {idx.size} samples, needs more than {per_class_train + per_class_val}"
            )
        idx = idx[rng.permutation(idx.size)]
        assignment[idx[:per_class_train]] = "train"
        assignment[idx[per_class_train:per_class_train + per_class_val]] = "val"
        assignment[idx[per_class_train + per_class_val:]] = "test"
    return replace(d, assignment=tuple(assignment), per_class_train=per_class_train,
                   per_class_val=per_class_val, seed=seed)
