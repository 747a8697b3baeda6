import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from ambsec.nn import (
    DEFAULT_HIDDEN,
    Gradients,
    MLPDetector,
    MlpModel,
    TrainConfig,
    accuracy,
    decode_model,
    encode_model,
    forward,
    init_model,
    load_model,
    loss,
    loss_and_gradients,
    predict,
    save_model,
    sgd_step,
    softmax,
    train,
)
from ambsec.numerics import Prng


def _toy(n=200, d=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    return X, y


def test_default_parameter_count():
    sizes = (600, *DEFAULT_HIDDEN, 2)
    model = init_model(Prng(0), sizes)
    oracle = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    assert oracle == 1_563_402
    assert model.n_params == oracle


def test_glorot_init():
    model = init_model(Prng(0), (40, 60, 2))
    limit = np.sqrt(6 / 100)
    assert np.abs(model.weights[0]).max() <= limit
    assert np.abs(model.weights[0]).max() > 0.9 * limit
    assert not any(b.any() for b in model.biases)
    with pytest.raises(ValueError):
        init_model(Prng(0), (5,))
    with pytest.raises(ValueError):
        init_model(Prng(0), (5, 0, 2))


def test_model_shape_validation():
    with pytest.raises(ValueError):
        MlpModel((3, 2), [np.zeros((3, 2))], [np.zeros(2)])


@given(st.lists(st.floats(-700, 700), min_size=2, max_size=5))
def test_softmax_normalized_and_stable(logits):
    p = softmax(np.array(logits))
    assert np.all(np.isfinite(p))
    assert abs(p.sum() - 1.0) <= 1e-12


def test_loss_values():
    assert loss([0.5, 0.5], 0) == pytest.approx(np.log(2))
    assert loss([1.0, 0.0], 1) == pytest.approx(-np.log(1e-12))
    np.testing.assert_allclose(loss(np.array([[0.2, 0.8], [0.9, 0.1]]), [1, 0]),
                               [-np.log(0.8), -np.log(0.9)])


def test_predict_ties_and_argmax():
    model = MlpModel((1, 2), [np.zeros((2, 1))], [np.zeros(2)])
    assert predict(model, [3.0]) == 0
    model.biases[0][:] = [np.log(0.1), np.log(0.9)]
    assert predict(model, [0.0]) == 1
    rnd = init_model(Prng(2), (4, 5, 2))
    X = np.random.default_rng(0).standard_normal((1000, 4))
    assert np.array_equal(predict(rnd, X), np.argmax(forward(rnd, X), axis=1))


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError):
        forward(init_model(Prng(0), (4, 2)), np.zeros(5))


@pytest.mark.parametrize("draw", range(5))
def test_gradients_match_finite_differences(draw):
    rng = Prng(100, draw)
    model = init_model(rng, (6, 4, 3, 2))
    for w in model.weights:
        w *= 1.5
    X = rng.standard_normal((7, 6))
    y = rng.integers(0, 2, 7)
    _, grads, _ = loss_and_gradients(model, X, y)
    theta = model.flat()
    g = grads.flat()
    h = 1e-5
    for i in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += h
        minus[i] -= h
        lp = loss_and_gradients(model.copy().assign_flat(plus), X, y)[0]
        lm = loss_and_gradients(model.copy().assign_flat(minus), X, y)[0]
        fd = (lp - lm) / (2 * h)
        assert abs(fd - g[i]) <= 1e-4 * max(abs(fd), abs(g[i]), 1e-8) + 1e-10


def test_sgd_step():
    model = init_model(Prng(0), (3, 2))
    before = model.flat()
    _, grads, _ = loss_and_gradients(model, np.ones((2, 3)), [0, 1])
    sgd_step(model, grads, 0.5)
    np.testing.assert_allclose(model.flat(), before - 0.5 * grads.flat())


def test_sgd_step_scalar_and_zero_rate():
    model = MlpModel((1, 1), [np.array([[1.0]])], [np.array([0.0])])
    grads = Gradients([np.array([[0.5]])], [np.array([0.0])])
    sgd_step(model, grads, 0.1)
    assert model.weights[0][0, 0] == pytest.approx(0.95)
    sgd_step(model, grads, 0.0)
    assert model.weights[0][0, 0] == pytest.approx(0.95)


def test_training_learns_and_is_deterministic():
    X, y = _toy()
    cfg = TrainConfig(learning_rate=0.5, batch_size=20, epochs=30, seed=3)
    a, hist = train(init_model(Prng(1), (6, 8, 2)), X, y, cfg)
    b, _ = train(init_model(Prng(1), (6, 8, 2)), X, y, cfg)
    assert a.flat().tobytes() == b.flat().tobytes()
    assert hist[-1].loss < hist[0].loss
    assert accuracy(a, X, y) > 0.95
    assert [h.epoch for h in hist] == list(range(1, 31))


def test_zero_epochs_leave_model_unchanged():
    X, y = _toy()
    model = init_model(Prng(1), (6, 8, 2))
    before = model.flat()
    train(model, X, y, TrainConfig(epochs=0))
    assert np.array_equal(model.flat(), before)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_model_file_roundtrip(tmp_path):
    model = init_model(Prng(5), (6, 4, 2))
    path = tmp_path / "m.ambnn"
    save_model(model, path)
    data = path.read_bytes()
    assert data[:6] == b"AMBNN1"
    assert len(data) == 6 + 4 + 12 + 8 * model.n_params
    back = load_model(path)
    assert back.layer_sizes == (6, 4, 2)
    assert np.array_equal(back.flat(), model.flat())
    with pytest.raises(ValueError):
        decode_model(data[:-8])
    with pytest.raises(ValueError):
        decode_model(data[:12])
    with pytest.raises(ValueError):
        decode_model(b"XXXXXX" + data[6:])
    assert encode_model(back) == data


def test_detector_estimator_api():
    X, y = _toy()
    det = MLPDetector(hidden_layer_sizes=(8,), learning_rate=0.5, batch_size=20, epochs=20, random_state=0)
    assert clone(det).get_params() == det.get_params()
    det.fit(X, y)
    assert det.score(X, y) > 0.9
    proba = det.predict_proba(X[:3])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    warm = MLPDetector(hidden_layer_sizes=(8,), learning_rate=0.5, batch_size=20, epochs=0).fit(
        X, y, warm_model=det.model_)
    assert np.array_equal(warm.model_.flat(), det.model_.flat())
    assert warm.model_ is not det.model_
