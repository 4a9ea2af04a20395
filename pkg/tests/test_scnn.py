import numpy as np
import pytest

from resfeats.errors import InvalidConfig, ShapeMismatch
from resfeats.nn_ops import softmax_ce
from resfeats.scnn import (
    SCNNHead,
    TrainConfig,
    load_scnn,
    loss_and_gradients,
    save_scnn,
    scnn_build,
    scnn_forward,
    scnn_predict,
    scnn_train,
)

from oracles import central_diff, grad_rel_err


def micro_head(seed=0, conv_channels=(4,)):
    head = scnn_build((8, 3, 3), 2, seed=seed, conv_channels=conv_channels, fc_width=5, dtype=np.float64)
    # nonzero biases so every parameter group is exercised
    r = np.random.default_rng(seed + 100)
    params = {k: (v if not k.endswith("bias") else r.standard_normal(v.shape) * 0.1) for k, v in head.params.items()}
    return SCNNHead(head.input_shape, head.num_classes, params)


def test_res5c_head_geometry():
    head = scnn_build((2048, 7, 7), 10, seed=0)
    assert head.params["scnn.conv.weight"].shape == (512, 2048, 1, 1)
    assert head.pooled_shape == (512, 3, 3)
    assert head.params["scnn.fc1.weight"].shape == (4096, 4608)
    assert head.params["scnn.fc2.weight"].shape == (10, 4096)
    x = np.zeros((2048, 7, 7), np.float32)
    from resfeats.nn_ops import conv2d
    assert conv2d(x, head.convs()[0]).shape == (512, 7, 7)


def test_same_seed_same_init():
    a = scnn_build((16, 4, 4), 3, seed=7, fc_width=32)
    b = scnn_build((16, 4, 4), 3, seed=7, fc_width=32)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)
    assert all(not np.any(v) for k, v in a.params.items() if k.endswith("bias"))


def test_build_errors():
    with pytest.raises(InvalidConfig):
        scnn_build((8, 3, 3), 1)
    with pytest.raises(InvalidConfig):
        scnn_build((8, 1, 1), 2)
    with pytest.raises(InvalidConfig):
        scnn_build((8, 3), 2)


def test_zero_input_gives_composed_biases():
    head = micro_head()
    p = head.params
    conv = np.maximum(p["scnn.conv.bias"], 0)  # 1x1 conv of zeros is the bias
    pooled = np.repeat(conv, 1)  # 3x3 map pooled 2x2 -> 1x1
    hidden = np.maximum(p["scnn.fc1.weight"] @ pooled + p["scnn.fc1.bias"], 0)
    expected = p["scnn.fc2.weight"] @ hidden + p["scnn.fc2.bias"]
    np.testing.assert_allclose(scnn_forward(head, np.zeros((8, 3, 3))), expected, rtol=1e-12)


def test_forward_matches_manual_composition(rng):
    head = micro_head(conv_channels=(4, 3))
    x = rng.standard_normal((8, 3, 3))
    p = head.params
    a = np.einsum("oc,chw->ohw", p["scnn.conv.weight"][:, :, 0, 0], x) + p["scnn.conv.bias"][:, None, None]
    a = np.maximum(a, 0)
    a = np.einsum("oc,chw->ohw", p["scnn.conv2.weight"][:, :, 0, 0], a) + p["scnn.conv2.bias"][:, None, None]
    a = np.maximum(a, 0)
    pooled = a[:, :2, :2].max(axis=(1, 2))
    hidden = np.maximum(p["scnn.fc1.weight"] @ pooled + p["scnn.fc1.bias"], 0)
    expected = p["scnn.fc2.weight"] @ hidden + p["scnn.fc2.bias"]
    out = scnn_forward(head, x)
    np.testing.assert_allclose(out, expected, rtol=1e-12)
    assert out.tobytes() == scnn_forward(head, x).tobytes()


def test_forward_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        scnn_forward(micro_head(), np.zeros((8, 4, 4)))


@pytest.mark.parametrize("conv_channels", [(4,), (4, 3)])
def test_full_gradient_matches_finite_differences(rng, conv_channels):
    head = micro_head(conv_channels=conv_channels)
    x = rng.standard_normal((3, 8, 3, 3))
    y = np.array([0, 1, 1])
    _, grads = loss_and_gradients(head, x, y)

    for name, value in head.params.items():
        def loss_at(v, name=name):
            params = dict(head.params, **{name: v})
            return loss_and_gradients(SCNNHead(head.input_shape, 2, params), x, y)[0]
        assert grad_rel_err(grads[name], central_diff(loss_at, value)) < 1e-4, name


def test_small_step_decreases_loss(rng):
    head = micro_head()
    x = rng.standard_normal((6, 8, 3, 3))
    y = np.array([0, 1, 0, 1, 1, 0])
    loss, grads = loss_and_gradients(head, x, y)
    stepped = {k: v - 1e-4 * grads[k] for k, v in head.params.items()}
    assert loss_and_gradients(SCNNHead(head.input_shape, 2, stepped), x, y)[0] < loss


def _separable_maps(rng, n=20):
    y = np.arange(n) % 2
    X = rng.standard_normal((n, 8, 3, 3)) * 0.5
    X[:, 0] += np.where(y == 1, 1.5, -1.5)[:, None, None]
    return X.astype(np.float32), y


def test_training_separates_toy_maps(rng):
    X, y = _separable_maps(rng)
    head = scnn_build((8, 3, 3), 2, seed=0, conv_channels=(32,), fc_width=64)
    trained, losses = scnn_train(head, X, y, TrainConfig(epochs=200, batch_size=8))
    assert len(losses) == 200
    assert np.mean(scnn_predict(trained, X)[0] == y) == 1.0
    assert losses[-1] < losses[0]


def test_zero_learning_rate_changes_nothing(rng):
    X, y = _separable_maps(rng)
    head = scnn_build((8, 3, 3), 2, seed=0, conv_channels=(4,), fc_width=8)
    trained, losses = scnn_train(head, X, y, TrainConfig(learning_rate=0.0, epochs=3, batch_size=20))
    assert all(trained.params[k].tobytes() == head.params[k].tobytes() for k in head.params)
    assert losses[1] == pytest.approx(losses[0], rel=1e-6) and losses[2] == pytest.approx(losses[0], rel=1e-6)


def test_training_is_deterministic(rng):
    X, y = _separable_maps(rng)
    cfg = TrainConfig(epochs=4, batch_size=6, seed=5)
    head = scnn_build((8, 3, 3), 2, seed=1, conv_channels=(4,), fc_width=8)
    a, la = scnn_train(head, X, y, cfg)
    b, lb = scnn_train(head, X, y, cfg)
    assert la == lb
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_train_errors(rng):
    X, y = _separable_maps(rng)
    head = scnn_build((8, 3, 3), 2, fc_width=4, conv_channels=(2,))
    with pytest.raises(InvalidConfig):
        scnn_train(head, X, y + 1)
    with pytest.raises(InvalidConfig):
        scnn_train(head, X[:0], y[:0])
    with pytest.raises(InvalidConfig):
        TrainConfig(epochs=0)


def test_predict_ties_and_probabilities(rng):
    head = micro_head()
    params = dict(head.params)
    params["scnn.fc2.weight"] = np.repeat(params["scnn.fc2.weight"][:1], 2, axis=0)
    params["scnn.fc2.bias"] = np.zeros(2)
    tied = SCNNHead(head.input_shape, 2, params)
    x = rng.standard_normal((8, 3, 3))
    label, probs = scnn_predict(tied, x)
    assert label == 0
    label, probs = scnn_predict(head, x)
    assert abs(probs.sum() - 1) <= 1e-6
    _, ce_probs = softmax_ce(scnn_forward(head, x), 0)
    np.testing.assert_allclose(probs, ce_probs, rtol=1e-12)


def test_save_load(tmp_path):
    head = scnn_build((8, 3, 3), 3, seed=2, conv_channels=(4, 5), fc_width=6)
    save_scnn(head, tmp_path / "h.rft", classes=["a", "b", "c"], cfg=TrainConfig())
    back = load_scnn(tmp_path / "h.rft")
    assert back.conv_channels == (4, 5) and back.fc_width == 6 and back.num_classes == 3
    assert set(back.params) >= {"scnn.conv.weight", "scnn.conv2.bias", "scnn.fc1.weight", "scnn.fc2.bias"}
    x = np.random.default_rng(0).standard_normal((8, 3, 3)).astype(np.float32)
    np.testing.assert_array_equal(scnn_forward(back, x), scnn_forward(head, x))
    meta = (tmp_path / "h.rft.meta").read_text()
    assert "classes=a,b,c" in meta and "train.learning_rate=0.01" in meta
