import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from resfeats.errors import InvalidGeometry, UnreadableImage
from resfeats.pipeline.images import (
    IMAGENET_MEAN,
    augment16,
    decode_ppm,
    five_crops,
    mirror,
    preprocess,
    read_ppm,
    resize_bilinear,
    rotate,
    write_ppm,
)


def test_ppm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (5, 7, 3)).astype(np.uint8)
    write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(read_ppm(tmp_path / "a.ppm"), img)


def test_ppm_header_comments_and_16bit():
    raster = np.array([[[0, 65535, 32768]]], dtype=">u2").tobytes()
    img = decode_ppm(b"P6 # comment\n1 # width done\n1\n65535\n" + raster)
    np.testing.assert_array_equal(img, [[[0, 255, 128]]])


@pytest.mark.parametrize("payload", [b"P3\n1 1\n255\n1 2 3", b"P6\n2 2\n255\n\x00\x00", b"P6\n2", b"", b"P6\nx 1\n255\n"])
def test_bad_ppm(payload):
    with pytest.raises(UnreadableImage):
        decode_ppm(payload)


def test_missing_file(tmp_path):
    with pytest.raises(UnreadableImage):
        read_ppm(tmp_path / "none.ppm")


def test_bilinear_2x2_to_1x1_is_the_centre_average():
    img = np.array([[[0, 10, 20], [4, 30, 0]], [[8, 50, 100], [12, 70, 60]]], dtype=np.float64)
    out = resize_bilinear(img, 1, 1)
    # the single output pixel centre sits at (0.5, 0.5): equal weights on all four
    np.testing.assert_allclose(out[0, 0], img.reshape(4, 3).mean(axis=0))


def test_bilinear_identity_at_same_size(rng):
    img = rng.random((6, 9, 3))
    np.testing.assert_allclose(resize_bilinear(img, 6, 9), img, atol=1e-12)


def test_preprocess_constant_color():
    color = np.array([51, 102, 204], dtype=np.uint8)
    img = np.broadcast_to(color, (20, 30, 3))
    out = preprocess(img)
    assert out.shape == (3, 224, 224) and out.dtype == np.float32
    expected = color / 255.0 - np.array(IMAGENET_MEAN)
    for c in range(3):
        np.testing.assert_allclose(out[c], expected[c], atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(8, 60), st.integers(8, 60))
def test_preprocess_shape_always_224(h, w):
    img = np.zeros((h, w, 3), np.uint8)
    assert preprocess(img).shape == (3, 224, 224)


def test_preprocess_rejects_tiny():
    with pytest.raises(UnreadableImage):
        preprocess(np.zeros((7, 20, 3), np.uint8))


def test_augment16_count_and_order(rng):
    img = rng.integers(0, 256, (40, 48, 3)).astype(np.uint8)
    views = augment16(img)
    assert len(views) == 16
    np.testing.assert_array_equal(views[0], img)
    crops = five_crops(img)
    for i, crop in enumerate(crops, start=1):
        np.testing.assert_array_equal(views[2 * i], crop)
        assert crop.shape[:2] == (35, 42)
    np.testing.assert_array_equal(views[12], rotate(img, 15.0))
    for i in range(8):
        np.testing.assert_array_equal(views[2 * i + 1], mirror(views[2 * i]))
        np.testing.assert_array_equal(mirror(views[2 * i + 1]), views[2 * i])


def test_centre_crop_of_symmetric_image_is_its_own_mirror(rng):
    half = rng.integers(0, 256, (32, 16, 3))
    img = np.concatenate([half, half[:, ::-1]], axis=1).astype(np.uint8)
    centre = five_crops(img)[4]
    np.testing.assert_array_equal(centre, mirror(centre))
    assert np.array_equal(augment16(img)[10], augment16(img)[11])


def test_rotation_properties(rng):
    img = rng.random((9, 9, 3))
    np.testing.assert_allclose(rotate(img, 0.0), img, atol=1e-12)
    # a quarter turn of an odd square lands exactly on the pixel grid
    np.testing.assert_allclose(rotate(img, 90.0), np.rot90(img, 1), atol=1e-9)
    const = np.full((12, 10, 3), 7.0)
    np.testing.assert_allclose(rotate(const, 15.0), 7.0)  # border replication, no black corners


def test_augment16_geometry_errors():
    with pytest.raises(InvalidGeometry):
        augment16(np.zeros((6, 20, 3), np.uint8))


@settings(max_examples=25, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12), st.just(3))))
def test_mirror_is_an_involution(img):
    np.testing.assert_array_equal(mirror(mirror(img)), img)
