"""Binary PPM (P6) decoding, bilinear resampling and the 16-view augmentation.

Images are (H, W, 3) arrays: uint8 straight from disk, float64 after any
resampling. Network inputs are (3, 224, 224) float32.
"""

import math
from pathlib import Path

import numpy as np

from ..container import atomic_write_bytes
from ..errors import InvalidGeometry, UnreadableImage

INPUT_SIZE = 224
IMAGENET_MEAN = (0.485, 0.456, 0.406)
CROP_FRACTION = 0.875
ROTATIONS = (15.0, -15.0)


def _ppm_tokens(data, count):
    """Parse ``count`` whitespace-separated header tokens; returns (tokens, offset)."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise UnreadableImage("truncated PPM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1  # one whitespace byte separates header and raster


def decode_ppm(data):
    tokens, offset = _ppm_tokens(data, 4)
    if tokens[0] != b"P6":
        raise UnreadableImage(f"not a binary PPM (magic {tokens[0][:4]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise UnreadableImage("non-numeric PPM header field") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise UnreadableImage(f"bad PPM geometry {width}x{height} maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    size = width * height * 3 * dtype.itemsize
    raster = data[offset:offset + size]
    if len(raster) != size:
        raise UnreadableImage("truncated PPM raster")
    img = np.frombuffer(raster, dtype=dtype).reshape(height, width, 3)
    if maxval != 255:
        img = np.round(img.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return img


def read_ppm(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableImage(f"{path}: {exc}") from exc
    try:
        return decode_ppm(data)
    except UnreadableImage as exc:
        raise UnreadableImage(f"{path}: {exc}") from None


def write_ppm(path, image):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidGeometry(f"expected an HxWx3 image, got {image.shape}")
    raster = np.clip(np.round(image), 0, 255).astype(np.uint8)
    header = f"P6\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + raster.tobytes())


def sample_bilinear(image, ys, xs):
    """Sample at fractional pixel coordinates; out-of-range coordinates replicate the border."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def resize_bilinear(image, height, width):
    """Half-pixel-centre bilinear resize (pixel i covers [i, i+1))."""
    h, w = image.shape[:2]
    ys = (np.arange(height) + 0.5) * (h / height) - 0.5
    xs = (np.arange(width) + 0.5) * (w / width) - 0.5
    return sample_bilinear(image, ys[:, None], xs[None, :])


def preprocess(image, size=INPUT_SIZE, mean=IMAGENET_MEAN):
    """Decoded RGB (H, W, 3) -> network input (3, size, size)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise UnreadableImage(f"expected an RGB image, got shape {image.shape}")
    if min(image.shape[:2]) < 8:
        raise UnreadableImage(f"image {image.shape[1]}x{image.shape[0]} is smaller than 8x8")
    resized = resize_bilinear(image, size, size) / 255.0
    resized -= np.asarray(mean, dtype=np.float64)
    return np.ascontiguousarray(resized.transpose(2, 0, 1), dtype=np.float32)


def mirror(image):
    return np.ascontiguousarray(image[:, ::-1])


def rotate(image, degrees):
    """Rotate about the centre (counter-clockwise for positive angles), keeping the size."""
    h, w = image.shape[:2]
    theta = math.radians(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse map: output pixel -> source pixel
    src_x = cx + dx * math.cos(theta) - dy * math.sin(theta)
    src_y = cy + dx * math.sin(theta) + dy * math.cos(theta)
    return sample_bilinear(image, src_y, src_x)


def five_crops(image, fraction=CROP_FRACTION):
    """Top-left, top-right, bottom-left, bottom-right and centre crops."""
    h, w = image.shape[:2]
    ch, cw = max(1, int(round(h * fraction))), max(1, int(round(w * fraction)))
    top, left = (h - ch) // 2, (w - cw) // 2
    corners = [(0, 0), (0, w - cw), (h - ch, 0), (h - ch, w - cw), (top, left)]
    return [np.ascontiguousarray(image[y:y + ch, x:x + cw]) for y, x in corners]


def augment16(image, fraction=CROP_FRACTION, rotations=ROTATIONS):
    """Sixteen views in a fixed order.

    Base views: original, the five crops (tl, tr, bl, br, centre) and the
    two rotations. Each base view is immediately followed by its mirror, so
    ``views[2 * i + 1] == mirror(views[2 * i])``.
    """
    image = np.asarray(image)
    if image.ndim != 3 or min(image.shape[:2]) < 8:
        raise InvalidGeometry(f"augmentation needs an RGB image of at least 8x8, got {image.shape}")
    if len(rotations) != 2:
        raise InvalidGeometry("exactly two rotation angles are used")
    base = [image.astype(np.float64)]
    base += [c.astype(np.float64) for c in five_crops(image, fraction)]
    base += [rotate(image, angle) for angle in rotations]
    views = []
    for view in base:
        views.append(view)
        views.append(mirror(view))
    return views
