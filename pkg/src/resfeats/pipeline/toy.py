"""Synthetic three-class image set and a random mini ResNet for end-to-end runs."""

from pathlib import Path

import numpy as np

from .. import container
from ..resnet import build_resnet, mini, save_weights
from .images import write_ppm

TOY_CLASSES = ("amber", "moss", "slate")
# per-class mean RGB in [0, 1]
TOY_COLORS = ((0.62, 0.42, 0.32), (0.38, 0.58, 0.36), (0.36, 0.42, 0.60))
TOY_WIDTHS = (16, 32, 64, 128)
TOY_DEPTHS = (1, 1, 1, 1)


def toy_image(rng, color, size=48):
    base = np.asarray(color) + rng.normal(0, 0.06, size=3)
    img = np.broadcast_to(base, (size, size, 3)).copy()
    # a few random rectangles of arbitrary colour act as clutter
    for _ in range(rng.integers(1, 4)):
        y, x = rng.integers(0, size - 8, size=2)
        h, w = rng.integers(4, size // 2, size=2)
        img[y:y + h, x:x + w] = 0.6 * img[y:y + h, x:x + w] + 0.4 * rng.uniform(0, 1, size=3)
    img += rng.normal(0, 0.08, size=img.shape)
    return np.clip(img, 0, 1) * 255.0


def write_mini_weights(path, seed=0, widths=TOY_WIDTHS, depths=TOY_DEPTHS):
    model = build_resnet(mini(widths, depths), seed=seed)
    save_weights(model, path)
    container.save_meta(path, {
        "variant": "mini",
        "widths": ",".join(map(str, widths)),
        "depths": ",".join(map(str, depths)),
        "seed": seed,
    })
    return model


def make_toy(out, seed=0, train_per_class=40, test_per_class=20, size=48):
    """Writes out/{train,test}/<class>/*.ppm and out/mini.rft. Returns the output path."""
    out = Path(out)
    rng = np.random.default_rng(seed)
    for part, count in (("train", train_per_class), ("test", test_per_class)):
        for name, color in zip(TOY_CLASSES, TOY_COLORS):
            for i in range(count):
                write_ppm(out / part / name / f"{name}_{i:03d}.ppm", toy_image(rng, color, size))
    write_mini_weights(out / "mini.rft", seed=seed)
    return out
