"""Reverse-mode engine: values against numpy, gradients against finite differences."""

import numpy as np
import pytest

from ssvad.autodiff import Tensor, concat, gradient_check, no_grad, stack

RNG = np.random.default_rng(70701)


def leaf(shape):
    return Tensor(RNG.normal(size=shape), requires_grad=True)


def test_arithmetic_matches_numpy():
    a = RNG.normal(size=(3, 4))
    b = RNG.normal(size=(3, 4))
    ta, tb = Tensor(a), Tensor(b)
    np.testing.assert_allclose((ta + tb).data, a + b)
    np.testing.assert_allclose((ta - tb).data, a - b)
    np.testing.assert_allclose((ta * tb).data, a * b)
    np.testing.assert_allclose((ta / (tb + 10.0)).data, a / (b + 10.0))
    np.testing.assert_allclose((ta**3).data, a**3)
    np.testing.assert_allclose((-ta).data, -a)


def test_matmul_and_reductions_match_numpy():
    a = RNG.normal(size=(5, 3))
    b = RNG.normal(size=(3, 4))
    np.testing.assert_allclose((Tensor(a) @ Tensor(b)).data, a @ b)
    np.testing.assert_allclose(Tensor(a).sum(axis=0).data, a.sum(axis=0))
    np.testing.assert_allclose(
        Tensor(a).mean(axis=1, keepdims=True).data, a.mean(axis=1, keepdims=True))


def test_backward_accumulates_over_reuse():
    x = leaf((4,))
    y = (x * x + x).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data + 1.0)


def test_broadcast_gradients_unbroadcast():
    x = leaf((3, 4))
    b = leaf((4,))
    (x + b).sum().backward()
    np.testing.assert_allclose(b.grad, np.full(4, 3.0))
    np.testing.assert_allclose(x.grad, np.ones((3, 4)))


@pytest.mark.parametrize(
    "fn",
    [
        lambda x: (x.sigmoid() * x.tanh()).sum(),
        lambda x: x.silu().mean(),
        lambda x: (x.exp() + (x * x + 1.0).log()).sum(),
        lambda x: (x * x + 0.5).sqrt().sum(),
        lambda x: x.abs().sum(),
        lambda x: x.reshape(2, 6).transpose((1, 0)).sum(axis=0).mean(),
        lambda x: x.flip(0).sum(),
        lambda x: x[1:, :2].sum(),
    ],
)
def test_elementwise_and_shape_op_gradients(fn):
    x = leaf((3, 4))
    # abs kink: keep values away from 0
    x.data = np.sign(x.data) * (np.abs(x.data) + 0.5)
    assert gradient_check(fn, [x]) < 1e-6


def test_matmul_gradient_batched():
    a = leaf((2, 3, 4))
    b = leaf((4, 5))
    assert gradient_check(lambda a, b: (a @ b).sum(), [a, b]) < 1e-6


def test_concat_stack_take_gradients():
    a, b = leaf((2, 3)), leaf((2, 3))
    assert gradient_check(lambda a, b: concat([a, b], axis=1).sum(), [a, b]) < 1e-6
    assert gradient_check(lambda a, b: stack([a, b], axis=0).mean(), [a, b]) < 1e-6
    idx = np.array([0, 1, 1])
    assert gradient_check(lambda a: a.take(idx, axis=1).sum(), [a]) < 1e-6


def test_no_grad_blocks_graph():
    x = leaf((3,))
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_deep_graph_backward():
    # iterative traversal must survive graphs deeper than the recursion limit
    x = leaf((2,))
    y = x
    for _ in range(5000):
        y = y + 1.0
    y.sum().backward()
    np.testing.assert_allclose(x.grad, np.ones(2))


def test_grad_shape_matches_leaf():
    x = leaf((2, 1, 3))
    (x * Tensor(RNG.normal(size=(2, 4, 3)))).sum().backward()
    assert x.grad.shape == (2, 1, 3)
