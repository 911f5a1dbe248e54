"""Convolution and resize primitives against brute-force oracles."""

import numpy as np
import pytest

from ssvad.autodiff import Tensor, gradient_check
from ssvad.ops import (conv2d, dwconv1d, dwconv2d, resize_bilinear,
                       resize_linear, upsample2_nearest)

RNG = np.random.default_rng(20524)


def brute_dwconv2d(x, w, pad_mode="constant"):
    """Sliding-window depthwise conv, same padding, one pixel at a time."""
    b, h, wd, c = x.shape
    kh, kw, _ = w.shape
    ph, pw = kh // 2, kw // 2
    if pad_mode == "constant":
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    else:
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)), mode="edge")
    out = np.zeros_like(x)
    for bi in range(b):
        for i in range(h):
            for j in range(wd):
                for ci in range(c):
                    acc = 0.0
                    for u in range(kh):
                        for v in range(kw):
                            acc += xp[bi, i + u, j + v, ci] * w[u, v, ci]
                    out[bi, i, j, ci] = acc
    return out


def brute_conv2d(x, w):
    b, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((b, h, wd, cout))
    for bi in range(b):
        for i in range(h):
            for j in range(wd):
                for co in range(cout):
                    acc = 0.0
                    for u in range(kh):
                        for v in range(kw):
                            for ci in range(cin):
                                acc += xp[bi, i + u, j + v, ci] * w[u, v, ci, co]
                    out[bi, i, j, co] = acc
    return out


def test_dwconv2d_matches_brute_force():
    x = RNG.normal(size=(2, 4, 4, 3))
    w = RNG.normal(size=(3, 3, 3))
    got = dwconv2d(Tensor(x), Tensor(w), padding="same").data
    np.testing.assert_allclose(got, brute_dwconv2d(x, w), atol=1e-6)


def test_dwconv2d_edge_padding_matches_brute_force():
    x = RNG.normal(size=(1, 5, 4, 2))
    w = RNG.normal(size=(5, 5, 2))
    got = dwconv2d(Tensor(x), Tensor(w), padding="same", pad_mode="edge").data
    np.testing.assert_allclose(got, brute_dwconv2d(x, w, "edge"), atol=1e-6)


def test_dwconv2d_edge_padding_keeps_constants_constant():
    x = np.full((1, 6, 6, 2), 1.7)
    w = RNG.normal(size=(3, 3, 2))
    y = dwconv2d(Tensor(x), Tensor(w), padding="same", pad_mode="edge").data
    expected = 1.7 * w.sum(axis=(0, 1))
    np.testing.assert_allclose(y, np.broadcast_to(expected, y.shape), atol=1e-10)


def test_conv2d_matches_brute_force():
    x = RNG.normal(size=(2, 4, 4, 2))
    w = RNG.normal(size=(3, 3, 2, 3))
    got = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(3))).data
    np.testing.assert_allclose(got, brute_conv2d(x, w), atol=1e-6)


def test_identity_kernel_is_identity():
    x = RNG.normal(size=(1, 4, 4, 2))
    w = np.zeros((3, 3, 2))
    w[1, 1, :] = 1.0
    np.testing.assert_allclose(dwconv2d(Tensor(x), Tensor(w)).data, x)


@pytest.mark.parametrize("pad_mode", ["constant", "edge"])
def test_dwconv2d_gradients(pad_mode):
    x = Tensor(RNG.normal(size=(1, 4, 4, 2)), requires_grad=True)
    w = Tensor(RNG.normal(size=(3, 3, 2)), requires_grad=True)
    err = gradient_check(
        lambda x, w: (dwconv2d(x, w, padding="same", pad_mode=pad_mode) ** 2).sum(),
        [x, w])
    assert err < 1e-6


def test_conv2d_gradients():
    x = Tensor(RNG.normal(size=(1, 3, 3, 2)), requires_grad=True)
    w = Tensor(RNG.normal(size=(3, 3, 2, 2)), requires_grad=True)
    b = Tensor(RNG.normal(size=(2,)), requires_grad=True)
    assert gradient_check(
        lambda x, w, b: conv2d(x, w, b).sum(), [x, w, b]) < 1e-6


def test_dwconv1d_matches_manual():
    x = RNG.normal(size=(1, 6, 2))
    w = RNG.normal(size=(3, 2))
    got = dwconv1d(Tensor(x), Tensor(w)).data
    xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
    want = np.zeros_like(x)
    for t in range(6):
        for c in range(2):
            want[0, t, c] = sum(xp[0, t + u, c] * w[u, c] for u in range(3))
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_upsample2_nearest_values_and_grad():
    x = Tensor(RNG.normal(size=(1, 2, 2, 1)), requires_grad=True)
    y = upsample2_nearest(x)
    assert y.shape == (1, 4, 4, 1)
    np.testing.assert_allclose(y.data[0, :2, :2, 0], np.full((2, 2), x.data[0, 0, 0, 0]))
    assert gradient_check(lambda x: (upsample2_nearest(x) ** 2).sum(), [x]) < 1e-6


def test_resize_linear_endpoints_and_midpoint():
    x = Tensor(np.array([[0.0], [1.0], [2.0], [3.0]])[None])  # (1, 4, 1)
    y = resize_linear(x, 7, axis=1).data[0, :, 0]
    # align-corners: endpoints preserved, midpoints interpolated
    np.testing.assert_allclose(y, [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0], atol=1e-12)


def test_resize_linear_constant_is_exact():
    x = Tensor(np.full((2, 5, 3), 0.77))
    np.testing.assert_allclose(resize_linear(x, 9, axis=1).data, 0.77, atol=1e-12)


def test_resize_bilinear_constant_is_exact():
    x = Tensor(np.full((1, 3, 5, 2), -1.3))
    y = resize_bilinear(x, 8, 8)
    assert y.shape == (1, 8, 8, 2)
    np.testing.assert_allclose(y.data, -1.3, atol=1e-12)


def test_resize_gradients():
    x = Tensor(RNG.normal(size=(1, 3, 4, 2)), requires_grad=True)
    assert gradient_check(lambda x: (resize_bilinear(x, 5, 7) ** 2).sum(), [x]) < 1e-6
    t = Tensor(RNG.normal(size=(2, 4, 3)), requires_grad=True)
    assert gradient_check(lambda t: resize_linear(t, 6, axis=1).sum(), [t]) < 1e-6
