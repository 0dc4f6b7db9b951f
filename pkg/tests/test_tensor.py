"""Tests for the reverse-mode autodiff engine."""
import numpy as np
import pytest

from marine.flow import ShapeMismatch
from marine.flow.tensor import (
    ParameterStore,
    Tape,
    Tensor,
    active_tape,
    concat,
    conv2d,
    exp,
    grad_check,
    layer_norm,
    masked_fill,
    matmul,
    mean,
    minimum,
    reduce_sum,
    softmax,
    tanh,
)


def test_tape_stack():
    assert active_tape() is None
    with Tape() as outer:
        with Tape() as inner:
            assert active_tape() is inner
        assert active_tape() is outer
    assert active_tape() is None


def test_no_recording_outside_tape():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = x * x
    assert not y.requires_grad


def test_softmax_uniform():
    assert softmax(Tensor([0.0, 0.0, 0.0])).value == pytest.approx([1 / 3] * 3)


def test_softmax_large_logits():
    value = softmax(Tensor([1000.0, 1000.0, -1e9])).value
    assert value == pytest.approx([0.5, 0.5, 0.0])


def test_identity_matmul():
    x = np.arange(6.0).reshape(2, 3)
    assert np.all(matmul(Tensor(np.eye(2)), Tensor(x)).value == x)


def test_tanh_derivative_at_zero():
    x = Tensor([0.0], requires_grad=True)
    with Tape() as tape:
        tape.backward(reduce_sum(tanh(x)))
    assert x.grad[0] == 1.0


def test_quadratic():
    x = Tensor(3.0, requires_grad=True)
    assert grad_check(lambda: x * x, [x]) < 1e-8
    x.zero_grad()
    with Tape() as tape:
        tape.backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_mlp_softmax_loss():
    rng = np.random.default_rng(0)
    w1 = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
    b1 = Tensor(rng.normal(size=6), requires_grad=True)
    w2 = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
    x = Tensor(rng.normal(size=(5, 4)))
    target = np.eye(3)[rng.integers(0, 3, 5)]

    def loss():
        probs = softmax(matmul(tanh(matmul(x, w1) + b1), w2))
        return mean(reduce_sum(probs * target, axis=-1))

    assert grad_check(loss, [w1, b1, w2]) < 1e-4


def test_conv_tanh_chain():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(2, 2, 6, 6)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.3, requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    probe = rng.normal(size=(2, 3, 4, 4))

    def loss():
        return reduce_sum(tanh(conv2d(x, w, b)) * probe)

    assert conv2d(x, w, b).shape == (2, 3, 4, 4)
    assert grad_check(loss, [x, w, b]) < 1e-4


def test_layer_norm_gradient():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    probe = rng.normal(size=(3, 5))
    assert grad_check(lambda: reduce_sum(layer_norm(x) * probe), [x]) < 1e-4


def test_layer_norm_statistics():
    out = layer_norm(Tensor(np.random.default_rng(3).normal(size=(4, 16)))).value
    assert np.abs(out.mean(axis=-1)).max() < 1e-12
    assert out.std(axis=-1) == pytest.approx(np.ones(4), rel=1e-4)


def test_masked_entries_get_no_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    mask = np.array([False, True, False])
    with Tape() as tape:
        tape.backward(reduce_sum(softmax(masked_fill(x, mask))))
    assert x.grad[1] == 0.0
    with Tape() as tape:
        x.zero_grad()
        tape.backward(reduce_sum(masked_fill(x, mask) * Tensor([1.0, 1.0, 1.0])))
    assert np.all(x.grad == [1.0, 0.0, 1.0])


def test_gradients_accumulate_over_subgraphs():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=3), requires_grad=True)
    with Tape() as tape:
        tape.backward(reduce_sum(exp(x)) + reduce_sum(tanh(x)))
    combined = x.grad.copy()
    x.zero_grad()
    with Tape() as tape:
        tape.backward(reduce_sum(exp(x)))
    with Tape() as tape:
        tape.backward(reduce_sum(tanh(x)))
    assert x.grad == pytest.approx(combined, abs=1e-12)


def test_broadcast_gradient():
    x = Tensor(np.ones((4, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    with Tape() as tape:
        tape.backward(reduce_sum(x + b))
    assert np.all(b.grad == 4.0)


def test_indexing_gradient():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        tape.backward(reduce_sum(x[:, -1]) + reduce_sum(x[0]))
    assert np.all(x.grad == [[1, 1, 2], [0, 0, 1]])


def test_concat_and_minimum():
    rng = np.random.default_rng(5)
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)

    def loss():
        joined = concat([a, b], axis=-1)
        return reduce_sum(minimum(joined * 2.0, joined + 0.5))

    assert grad_check(loss, [a, b]) < 1e-4


@pytest.mark.parametrize(
    "op, args",
    [
        (matmul, (np.ones((2, 3)), np.ones((2, 3)))),
        (matmul, (np.ones(3), np.ones((3, 2)))),
        (concat, ([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], 1)),
        (masked_fill, (Tensor(np.ones((2, 3))), np.ones(4, dtype=bool))),
        (conv2d, (Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((3, 1, 3, 3))))),
        (conv2d, (Tensor(np.ones((1, 2, 2, 2))), Tensor(np.ones((3, 2, 3, 3))))),
    ],
)
def test_shape_mismatch(op, args):
    with pytest.raises(ShapeMismatch):
        op(*args)


def test_add_mismatch():
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones(3)) + Tensor(np.ones(4))


def test_backward_gradient_shape():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
        with pytest.raises(ShapeMismatch):
            tape.backward(y, np.ones(4))


def test_parameter_store():
    store = ParameterStore()
    store.add("a", np.ones((2, 2)))
    store.add("b", np.arange(3.0))
    assert store.names == ["a", "b"]
    assert store.size == 7
    flat = store.flatten()
    assert np.all(flat == [1, 1, 1, 1, 0, 1, 2])
    store.load_flat(flat * 2)
    assert np.all(store["b"].value == [0, 2, 4])
    with pytest.raises(ShapeMismatch):
        store.load_flat(np.zeros(3))
    with pytest.raises(KeyError):
        store.add("a", np.zeros(1))


def test_grad_check_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeMismatch):
        grad_check(lambda: x * x, [x])
