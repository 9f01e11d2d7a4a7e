import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smcnn import training as T
from smcnn.errors import DegenerateDataError, TrainingDivergedError
from smcnn.model import build_sm_cnn, init_params
from smcnn.preprocess import WindowSample


def adam_reference(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam written out term by term."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta


def test_adam_matches_reference_sequence():
    cfg = T.TrainConfig(learning_rate=1e-3)
    seq = [0.5, -1.25, 2.0, 0.1, -0.3]
    params = {"p": np.array([1.0])}
    state = T.AdamState.zeros_like(params)
    for g in seq:
        T.adam_step(params, {"p": np.array([g])}, state, cfg)
    assert params["p"][0] == pytest.approx(adam_reference(1.0, seq), abs=1e-15)
    assert state.t == len(seq)


def test_adam_first_step_is_lr_times_sign():
    cfg = T.TrainConfig(learning_rate=0.01)
    params = {"w": np.array([0.0, 0.0])}
    state = T.AdamState.zeros_like(params)
    T.adam_step(params, {"w": np.array([3.0, -0.002])}, state, cfg)
    np.testing.assert_allclose(params["w"], [-0.01, 0.01], rtol=1e-5)


def test_adam_minimizes_quadratic():
    cfg = T.TrainConfig(learning_rate=0.05)
    params = {"x": np.array([3.0, -2.0])}
    state = T.AdamState.zeros_like(params)
    for _ in range(2000):
        T.adam_step(params, {"x": 2 * params["x"]}, state, cfg)
    assert np.abs(params["x"]).max() < 1e-2


def test_adam_rejects_mismatched_keys():
    params = {"a": np.zeros(2)}
    with pytest.raises(ValueError):
        T.adam_step(params, {"b": np.zeros(2)}, T.AdamState.zeros_like(params), T.TrainConfig())


@given(st.integers(1, 60), st.integers(1, 60), st.integers(0, 1000))
@settings(max_examples=60)
def test_split_is_stratified_and_disjoint(n0, n1, seed):
    y = np.array([0] * n0 + [1] * n1)
    tr, te = T.split_dataset(y, 0.7, seed)
    assert len(np.intersect1d(tr, te)) == 0
    assert len(tr) + len(te) == len(y)
    assert int((y[tr] == 0).sum()) == math.floor(0.7 * n0 + 1e-9)
    assert int((y[tr] == 1).sum()) == math.floor(0.7 * n1 + 1e-9)


def test_split_196_202_counts():
    y = np.array([1] * 196 + [0] * 202)
    tr, te = T.split_dataset(y, 0.7, 0)
    assert len(tr) == 137 + 141 and len(te) == 59 + 61


def test_split_single_class_is_degenerate():
    with pytest.raises(DegenerateDataError):
        T.split_dataset(np.zeros(10), 0.7, 0)


def test_subsample_fraction():
    y = np.array([0] * 40 + [1] * 20)
    keep = T.subsample(y, 0.25, 1)
    assert (y[keep] == 0).sum() == 10 and (y[keep] == 1).sum() == 5


@given(st.integers(-15, 15), st.integers(-50, 50))
@settings(max_examples=40)
def test_roll_and_shift_permute_values(roll, shift):
    w = np.random.default_rng(0).uniform(-1, 1, (30, 16)).astype(np.float32)
    out = T.augment_window(w, roll, shift, 1.0)
    np.testing.assert_array_equal(np.sort(out.ravel()), np.sort(w.ravel()))
    np.testing.assert_array_equal(out[shift % 30, roll % 16], w[0, 0])


@given(st.floats(0.8, 1.2), st.integers(0, 100))
@settings(max_examples=40)
def test_scaling_stays_normalized(scale, seed):
    w = np.random.default_rng(seed).uniform(-1, 1, (30, 16)).astype(np.float32)
    out = T.augment_window(w, 0, 0, scale)
    assert np.abs(out).max() <= 1.0
    assert out.dtype == np.float32


def test_augment_keeps_label_and_is_seeded():
    s = WindowSample(np.random.default_rng(1).uniform(-1, 1, (300, 16)).astype(np.float32), 1, 0)
    a = T.augment(s, T.AugmentConfig(), np.random.default_rng(5))
    b = T.augment(s, T.AugmentConfig(), np.random.default_rng(5))
    assert a.label == 1
    np.testing.assert_array_equal(a.values, b.values)


def test_augment_probability_zero_is_identity():
    w = np.random.default_rng(1).uniform(-1, 1, (300, 16)).astype(np.float32)
    out = T.augment(w, T.AugmentConfig(apply_probability=0.0), np.random.default_rng(0))
    np.testing.assert_array_equal(out, w)


def test_config_validation():
    with pytest.raises(ValueError):
        T.TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        T.AugmentConfig(channel_roll_max=16)


@pytest.fixture(scope="module")
def tiny():
    arch = build_sm_cnn(channels=5, length=64)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (24, 64, 5)).astype(np.float32)
    y = np.array([0, 1] * 12)
    x[y == 1, 30:34, 2] = 1.0
    return arch, x, y


def test_training_is_deterministic(tiny):
    arch, x, y = tiny
    cfg = T.TrainConfig(epochs=2, batch_size=8, augmentation=T.AugmentConfig(channel_roll_max=4))
    p1, h1 = T.train(arch, init_params(arch, 0), x, y, cfg)
    p2, h2 = T.train(arch, init_params(arch, 0), x, y, cfg)
    assert T.history_csv(h1) == T.history_csv(h2)
    assert all(p1[k].tobytes() == p2[k].tobytes() for k in p1)
    assert [h.epoch for h in h1] == [1, 2]


def test_zero_epochs_returns_initialization(tiny):
    arch, x, y = tiny
    p0 = init_params(arch, 0)
    p, h = T.train(arch, p0, x, y, T.TrainConfig(epochs=0))
    assert h == [] and all(np.array_equal(p[k], p0[k]) for k in p0)


def test_training_reduces_loss(tiny):
    arch, x, y = tiny
    _, h = T.train(arch, init_params(arch, 0), x, y, T.TrainConfig(epochs=8, batch_size=8,
                                                                   learning_rate=1e-3))
    assert h[-1].loss < h[0].loss


def test_divergence_is_reported(tiny):
    arch, x, y = tiny
    bad = x.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(TrainingDivergedError):
        T.train(arch, init_params(arch, 0), bad, y, T.TrainConfig(epochs=1))
