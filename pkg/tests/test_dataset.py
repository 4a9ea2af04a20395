import numpy as np
import pytest

from resfeats.errors import EmptyClass, InsufficientSamples, NoClasses, UnreadableImage, IndexOutOfRange, ShapeMismatch
from resfeats.pipeline.dataset import ingest, split
from resfeats.pipeline.images import write_ppm
from resfeats.pipeline.metrics import evaluate


def _make(root, counts, size=10):
    r = np.random.default_rng(0)
    for name, n in counts.items():
        (root / name).mkdir(parents=True, exist_ok=True)
        for i in range(n):
            write_ppm(root / name / f"img{i:02d}.ppm", r.integers(0, 256, (size, size, 3)))
    return root


def test_ingest_two_classes(tmp_path):
    d = ingest(_make(tmp_path, {"dogs": 3, "cats": 3}))
    assert d.classes == ("cats", "dogs")
    assert len(d) == 6
    assert sorted(set(d.labels.tolist())) == [0, 1]
    assert [p.name for p, _ in d.samples[:3]] == ["img00.ppm", "img01.ppm", "img02.ppm"]


def test_ingest_is_stable(tmp_path):
    _make(tmp_path, {"b": 4, "a": 2, "c": 3})
    assert ingest(tmp_path).samples == ingest(tmp_path).samples


def test_ingest_errors(tmp_path):
    with pytest.raises(NoClasses):
        ingest(tmp_path)
    _make(tmp_path, {"a": 1})
    (tmp_path / "b").mkdir()
    with pytest.raises(EmptyClass):
        ingest(tmp_path)
    (tmp_path / "b" / "junk.ppm").write_bytes(b"not an image")
    with pytest.raises(UnreadableImage):
        ingest(tmp_path)


def test_split_protocol_shape(tmp_path):
    d = split(ingest(_make(tmp_path, {"x": 40, "y": 40})), 30, 0, seed=1)
    for cls in range(2):
        parts = [a for (_, c), a in zip(d.samples, d.assignment) if c == cls]
        assert parts.count("train") == 30 and parts.count("val") == 0 and parts.count("test") == 10


def test_split_reproducible_and_partitioning(tmp_path):
    d = ingest(_make(tmp_path, {"x": 12, "y": 9}))
    a = split(d, 4, 2, seed=3)
    assert a.assignment == split(d, 4, 2, seed=3).assignment
    assert a.assignment != split(d, 4, 2, seed=4).assignment
    parts = [set(a.part(p)) for p in ("train", "val", "test")]
    assert set().union(*parts) == set(d.samples)
    assert sum(len(p) for p in parts) == len(d)


def test_split_insufficient(tmp_path):
    d = ingest(_make(tmp_path, {"x": 5, "y": 9}))
    with pytest.raises(InsufficientSamples):
        split(d, 4, 1)


def test_evaluate_extremes():
    assert evaluate([0, 1, 2], [0, 1, 2], 3).overall_accuracy == 1.0
    assert evaluate([1, 2, 0], [0, 1, 2], 3).overall_accuracy == 0.0


def test_evaluate_consistency(rng):
    truth = rng.integers(0, 5, 200)
    pred = np.where(rng.random(200) < 0.6, truth, rng.integers(0, 5, 200))
    r = evaluate(pred, truth, 5)
    np.testing.assert_array_equal(r.confusion.sum(axis=1), np.bincount(truth, minlength=5))
    assert r.overall_accuracy == np.trace(r.confusion) / 200
    for k in range(5):
        assert r.per_class_accuracy[k] == np.mean(pred[truth == k] == k)


def test_random_predictions_near_chance(rng):
    n, k = 9000, 9
    r = evaluate(rng.integers(0, k, n), rng.integers(0, k, n), k)
    p = 1 / k
    assert abs(r.overall_accuracy - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_evaluate_errors():
    with pytest.raises(ShapeMismatch):
        evaluate([0, 1], [0], 2)
    with pytest.raises(IndexOutOfRange):
        evaluate([0, 2], [0, 1], 2)
