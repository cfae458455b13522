import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from omicsbench.neural_core import (Adagrad, DenseLayer, Sequential, ShapeError, adagrad_step, backward,
                                    dense_backward, dense_forward, glorot_uniform, make_rng, sigmoid, softmax)


def test_zero_layer_gives_zero_output():
    layer = DenseLayer(np.zeros((3, 4)), np.zeros(3), "identity")
    out, _ = dense_forward(layer, make_rng(0).standard_normal((5, 4)))
    assert np.array_equal(out, np.zeros((5, 3)))


def test_dropout_zero_train_equals_eval():
    layer = DenseLayer.init(4, 3, make_rng(0), "relu", 0.0)
    x = make_rng(1).standard_normal((6, 4))
    a, _ = dense_forward(layer, x, train=True, rng=make_rng(2))
    b, _ = dense_forward(layer, x, train=False)
    assert np.array_equal(a, b)


def test_hand_affine_relu():
    layer = DenseLayer(np.array([[1.0, 1.0]]), np.array([0.5]), "relu")
    out, _ = dense_forward(layer, np.array([[1.0, 2.0]]))
    assert out.tolist() == [[3.5]]


def test_shape_mismatch_names_both_shapes():
    layer = DenseLayer(np.zeros((3, 4)), np.zeros(3))
    with pytest.raises(ShapeError, match=r"\(2, 5\).*\(3, 4\)"):
        dense_forward(layer, np.zeros((2, 5)))


def test_eval_mode_dropout_is_exact_identity():
    layer = DenseLayer.init(4, 3, make_rng(0), "identity", 0.7)
    x = make_rng(1).standard_normal((6, 4))
    out, _ = dense_forward(layer, x, train=False)
    assert np.array_equal(out, x @ layer.weights.T + layer.bias)


def test_inverted_dropout_keeps_expectation():
    layer = DenseLayer(np.eye(1), np.zeros(1), "identity", 0.5)
    out, _ = dense_forward(layer, np.ones((200_000, 1)), train=True, rng=make_rng(3))
    assert abs(out.mean() - 1.0) < 0.01
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_train_dropout_needs_rng():
    layer = DenseLayer.init(2, 2, make_rng(0), "relu", 0.3)
    with pytest.raises(ValueError):
        dense_forward(layer, np.ones((1, 2)), train=True)


@pytest.mark.parametrize("bad", [-0.1, 1.0, 1.5])
def test_dropout_rate_range(bad):
    with pytest.raises(ValueError):
        DenseLayer(np.zeros((1, 1)), np.zeros(1), "relu", bad)


def test_unknown_activation():
    with pytest.raises(ValueError, match="activation"):
        DenseLayer(np.zeros((1, 1)), np.zeros(1), "tanh")


def test_glorot_bounds():
    w = glorot_uniform(30, 10, make_rng(0))
    assert w.shape == (10, 30)
    assert np.abs(w).max() <= math.sqrt(6 / 40)


def test_zero_loss_gradient_gives_zero_grads():
    net = Sequential.build([4, 5, 2], ["relu", "sigmoid"], [0.0, 0.0], make_rng(0), "n")
    x = make_rng(1).standard_normal((3, 4))
    out, caches = net.forward(x)
    dx, grads = backward(net, np.zeros_like(out), caches)
    assert set(grads) == set(net.params())
    assert all(not g.any() for g in grads.values())
    assert not dx.any()


def test_linear_squared_error_outer_product():
    rng = make_rng(0)
    layer = DenseLayer(rng.standard_normal((2, 3)), rng.standard_normal(2))
    x = rng.standard_normal((1, 3))
    t = rng.standard_normal((1, 2))
    out, cache = dense_forward(layer, x)
    r = out - t  # loss 0.5 * |r|^2
    dx, dw, db = dense_backward(layer, r, cache)
    assert np.allclose(dw, np.outer(r[0], x[0]), rtol=0, atol=1e-14)
    assert np.allclose(db, r[0])
    assert np.allclose(dx, r @ layer.weights)


def test_backward_cache_mismatch():
    net = Sequential.build([3, 2], ["relu"], [0.0], make_rng(0), "n")
    with pytest.raises(ShapeError):
        backward(net, np.zeros((1, 2)), [])


def test_two_layer_relu_finite_differences_seed_42():
    rng = make_rng(42)
    net = Sequential.build([5, 7, 3], ["relu", "softmax"], [0.3, 0.0], rng, "net")
    for p in net.params().values():
        p += rng.normal(0, 0.1, p.shape)
    x = rng.standard_normal((8, 5))
    w = rng.standard_normal((8, 3))

    def loss():
        out, caches = net.forward(x, train=True, rng=make_rng(7))
        return float(np.sum(out * w)), caches, out

    _, caches, out = loss()
    _, grads = backward(net, w, caches)
    for name, p in net.params().items():
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + 1e-5
            lp = loss()[0]
            flat[i] = old - 1e-5
            lm = loss()[0]
            flat[i] = old
            num = (lp - lm) / 2e-5
            a = grads[name].reshape(-1)[i]
            assert abs(a - num) <= 1e-4 * max(abs(a), abs(num)) + 1e-9, (name, i, a, num)


def test_adagrad_zero_grad_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    adagrad_step(Adagrad(0.01), p, {"w": np.zeros(2)})
    assert p["w"].tolist() == [1.0, -2.0]


def test_adagrad_one_step():
    p = {"w": np.zeros(1)}
    adagrad_step(Adagrad(0.01, 0.0, 1e-10), p, {"w": np.ones(1)})
    assert abs(p["w"][0] - (-0.01)) < 1e-6


def test_adagrad_second_step_shrinks_by_sqrt2():
    p = {"w": np.zeros(1)}
    st_ = Adagrad(0.01)
    adagrad_step(st_, p, {"w": np.ones(1)})
    before = p["w"][0]
    adagrad_step(st_, p, {"w": np.ones(1)})
    assert abs((before - p["w"][0]) - 0.01 / math.sqrt(2)) < 1e-9


def test_adagrad_weight_decay_enters_gradient():
    p = {"w": np.array([2.0])}
    st_ = Adagrad(0.1, weight_decay=0.5)
    adagrad_step(st_, p, {"w": np.array([0.0])})
    # g = 0 + 0.5 * 2 = 1, acc = 1, step = 0.1
    assert st_.accumulators["w"][0] == 1.0
    assert abs(p["w"][0] - 1.9) < 1e-9


def test_adagrad_nonfinite_names_parameter():
    with pytest.raises(FloatingPointError, match="'enc.0.weights'"):
        adagrad_step(Adagrad(0.01), {"enc.0.weights": np.zeros(2)}, {"enc.0.weights": np.array([1.0, np.nan])})


def test_adagrad_misaligned():
    with pytest.raises(KeyError):
        adagrad_step(Adagrad(0.01), {"a": np.zeros(1)}, {"b": np.zeros(1)})


@pytest.mark.parametrize("kw", [{"learning_rate": 0.0}, {"learning_rate": 0.1, "weight_decay": -1.0},
                                {"learning_rate": 0.1, "epsilon": 0.0}])
def test_adagrad_validation(kw):
    with pytest.raises(ValueError):
        Adagrad(**kw)


@settings(max_examples=50, deadline=None)
@given(st.lists(arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)), min_size=1, max_size=6))
def test_adagrad_accumulators_never_decrease(grad_seq):
    p = {"w": np.zeros(4)}
    state = Adagrad(0.01, 0.001)
    prev = np.zeros(4)
    for g in grad_seq:
        adagrad_step(state, p, {"w": g})
        assert np.all(state.accumulators["w"] >= prev)
        prev = state.accumulators["w"].copy()


def test_softmax_examples():
    assert np.allclose(softmax(np.zeros(4)), 0.25)
    big = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(big)) and abs(big[0] - 1) < 1e-12 and big[1] < 1e-300
    r = softmax(np.log([1.0, 2.0, 3.0]))
    assert np.allclose(r, [1 / 6, 2 / 6, 3 / 6], rtol=0, atol=1e-9)


def test_softmax_empty():
    with pytest.raises(ValueError):
        softmax(np.array([]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-700, 700)))
def test_softmax_is_a_distribution(v):
    p = softmax(v)
    assert np.all(p >= 0) and abs(p.sum() - 1.0) < 1e-9


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e4, 1e4)))
def test_sigmoid_bounded_and_finite(z):
    s = sigmoid(z)
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))


def test_rng_determinism():
    assert np.array_equal(make_rng(123).random(10), make_rng(123).random(10))
    assert not np.array_equal(make_rng(123).random(10), make_rng(124).random(10))
