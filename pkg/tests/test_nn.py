import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smcnn import nn
from gradcheck import away_from_zero, distinct_values, numeric_grad, rel_error


def conv_loops(x, w, b):
    T, C, F = x.shape
    kh, kw, _, O = w.shape
    out = np.zeros((T - kh + 1, C - kw + 1, O))
    for t in range(T - kh + 1):
        for c in range(C - kw + 1):
            for o in range(O):
                acc = b[o]
                for i in range(kh):
                    for j in range(kw):
                        for f in range(F):
                            acc += x[t + i, c + j, f] * w[i, j, f, o]
                out[t, c, o] = acc
    return out


def pool_loops(x, ph, pw):
    T, C, F = x.shape
    out = np.empty((T // ph, C // pw, F))
    for t in range(T // ph):
        for c in range(C // pw):
            out[t, c] = x[t * ph:(t + 1) * ph, c * pw:(c + 1) * pw].max(axis=(0, 1))
    return out


# ---------------------------------------------------------------- padding

def test_circular_pad_copies_wraparound_rows():
    x = np.arange(2 * 4 * 1, dtype=float).reshape(2, 4, 1)
    y = nn.circular_pad_channels(x)
    assert y.shape == (2, 6, 1)
    np.testing.assert_array_equal(y[:, 0], x[:, 3])
    np.testing.assert_array_equal(y[:, 5], x[:, 0])
    np.testing.assert_array_equal(y[:, 1:5], x)


def test_circular_pad_sixteen_to_eighteen():
    x = np.zeros((300, 16, 1))
    assert nn.circular_pad_channels(x).shape == (300, 18, 1)


def test_circular_pad_rejects_single_channel():
    with pytest.raises(ValueError):
        nn.circular_pad_channels(np.zeros((4, 1, 1)))


@given(st.integers(0, 15))
def test_pad_then_conv_commutes_with_channel_roll(k):
    rng = np.random.default_rng(k)
    x = rng.standard_normal((6, 16, 2))
    w = rng.standard_normal((2, 3, 2, 3))
    b = rng.standard_normal(3)
    # with a width-3 kernel and pad 1 the output has 16 columns, one per channel
    base = nn.conv2d_forward(nn.circular_pad_channels(x), w, b)
    rolled = nn.conv2d_forward(nn.circular_pad_channels(np.roll(x, k, axis=1)), w, b)
    np.testing.assert_allclose(rolled, np.roll(base, k, axis=1), atol=1e-12)


# ---------------------------------------------------------------- convolution

@pytest.mark.parametrize("shape,kernel", [((5, 4, 1), (2, 2, 1, 3)), ((7, 6, 3), (2, 2, 3, 4)),
                                          ((6, 5, 2), (3, 1, 2, 2))])
def test_conv_matches_loop_oracle(rng, shape, kernel):
    x = rng.standard_normal(shape)
    w = rng.standard_normal(kernel)
    b = rng.standard_normal(kernel[-1])
    np.testing.assert_allclose(nn.conv2d_forward(x, w, b), conv_loops(x, w, b), atol=1e-12)


def test_conv_batch_axes_are_independent(rng):
    x = rng.standard_normal((3, 6, 5, 2))
    w = rng.standard_normal((2, 2, 2, 4))
    b = rng.standard_normal(4)
    out = nn.conv2d_forward(x, w, b)
    for k in range(3):
        np.testing.assert_allclose(out[k], conv_loops(x[k], w, b), atol=1e-12)


def test_conv_errors():
    with pytest.raises(ValueError):
        nn.conv2d_forward(np.zeros((4, 4, 2)), np.zeros((2, 2, 3, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        nn.conv2d_forward(np.zeros((1, 4, 1)), np.zeros((2, 2, 1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        nn.conv2d_forward(np.zeros((4, 4, 1)), np.zeros((2, 2, 1, 2)), np.zeros(3))


# ---------------------------------------------------------------- pooling

@given(arrays(np.float64, (7, 5, 2), elements=st.floats(-10, 10)),
       st.sampled_from([(2, 1), (2, 2), (3, 2), (1, 1)]))
@settings(max_examples=60)
def test_pool_equals_block_max(x, pool):
    out, _ = nn.maxpool_forward(x, *pool)
    np.testing.assert_array_equal(out, pool_loops(x, *pool))


def test_stripe_pool_keeps_channel_axis():
    out, _ = nn.maxpool_forward(np.zeros((299, 17, 16)), 2, 1)
    assert out.shape == (149, 17, 16)


def test_pool_ties_route_gradient_to_first_element():
    x = np.ones((2, 2, 1))
    _, idx = nn.maxpool_forward(x, 2, 2)
    dx = nn.maxpool_backward(idx, np.ones((1, 1, 1)))
    assert dx[0, 0, 0] == 1 and dx.sum() == 1


def test_pool_rejects_small_input():
    with pytest.raises(ValueError):
        nn.maxpool_forward(np.zeros((1, 4, 1)), 2, 1)


# ---------------------------------------------------------------- softmax / loss

def test_softmax_rows_sum_to_one_and_survive_large_logits():
    z = np.array([[1000.0, -1000.0], [3.0, 3.0]])
    p = nn.softmax(z)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0)
    np.testing.assert_allclose(p[1], [0.5, 0.5])
    assert np.all(np.isfinite(nn.log_softmax(z)))


def test_cross_entropy_value():
    logits = np.array([[0.0, np.log(3.0)]])  # p_defect = 0.75
    loss, _ = nn.softmax_cross_entropy(logits, np.array([1]))
    assert loss[0] == pytest.approx(-np.log(0.75))
    loss, _ = nn.softmax_cross_entropy(logits, np.array([0]))
    assert loss[0] == pytest.approx(-np.log(0.25))


# ---------------------------------------------------------------- gradients

def _check(analytic, f, x):
    assert rel_error(analytic, numeric_grad(f, x)) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_conv_backward(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((5, 4, 2))
    w = rng.standard_normal((2, 2, 2, 3))
    b = rng.standard_normal(3)
    G = rng.standard_normal((4, 3, 3))
    dx, dw, db = nn.conv2d_backward(x, w, G)
    f = lambda: float(np.sum(G * nn.conv2d_forward(x, w, b)))
    _check(dx, f, x)
    _check(dw, f, w)
    _check(db, f, b)


@pytest.mark.parametrize("seed", range(5))
def test_pool_backward(seed):
    rng = np.random.default_rng(seed)
    x = distinct_values(rng, (6, 4, 2))
    G = rng.standard_normal((3, 2, 2))
    _, idx = nn.maxpool_forward(x, 2, 2)
    f = lambda: float(np.sum(G * nn.maxpool_forward(x, 2, 2)[0]))
    _check(nn.maxpool_backward(idx, G), f, x)


@pytest.mark.parametrize("seed", range(5))
def test_relu_backward(seed):
    rng = np.random.default_rng(seed)
    x = away_from_zero(rng.standard_normal((4, 3, 2)))
    G = rng.standard_normal(x.shape)
    f = lambda: float(np.sum(G * nn.relu_forward(x)))
    _check(nn.relu_backward(x, G), f, x)


@pytest.mark.parametrize("seed", range(5))
def test_pad_backward(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 5, 2))
    G = rng.standard_normal((3, 7, 2))
    f = lambda: float(np.sum(G * nn.circular_pad_channels(x)))
    _check(nn.circular_pad_channels_backward(G), f, x)


@pytest.mark.parametrize("seed", range(5))
def test_dense_backward(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 6))
    w = rng.standard_normal((6, 4))
    b = rng.standard_normal(4)
    G = rng.standard_normal((3, 4))
    dx, dw, db = nn.dense_backward(x, w, G)
    f = lambda: float(np.sum(G * nn.dense_forward(x, w, b)))
    _check(dx, f, x)
    _check(dw, f, w)
    _check(db, f, b)


@pytest.mark.parametrize("seed", range(5))
def test_flatten_backward(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 4, 2))
    G = rng.standard_normal((2, 24))
    f = lambda: float(np.sum(G * nn.flatten(x)))
    _check(nn.unflatten(G, (3, 4, 2)), f, x)


@pytest.mark.parametrize("seed", range(5))
def test_cross_entropy_backward(seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((4, 2)) * 3
    y = rng.integers(0, 2, size=4)
    _, dz = nn.softmax_cross_entropy(z, y)
    f = lambda: float(np.sum(nn.softmax_cross_entropy(z, y)[0]))
    _check(dz, f, z)


def test_kernels_keep_float32():
    x = np.ones((4, 3, 1), dtype=np.float32)
    w = np.ones((2, 2, 1, 2), dtype=np.float32)
    assert nn.conv2d_forward(x, w, np.zeros(2, np.float32)).dtype == np.float32
