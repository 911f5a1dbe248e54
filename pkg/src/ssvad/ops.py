"""Structured differentiable ops: convolutions, upsampling, linear resize.

All image tensors are channels-last: (B, H, W, C); sequence tensors are
(B, L, C).  Convolutions are stride-1 with odd kernels and run as a loop
over kernel taps, each tap a matmul or broadcast multiply.  For the small
kernels used here (1..11) this beats materialising im2col buffers on a
single core, and the backward pass reuses the same taps.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor

__all__ = [
    "conv2d",
    "dwconv2d",
    "dwconv1d",
    "upsample2_nearest",
    "resize_linear",
    "resize_bilinear",
]


def _pad_hw(x: np.ndarray, ph: int, pw: int, mode: str = "constant") -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)), mode=mode)


def _fold_pad_grad(dxp: np.ndarray, ph: int, pw: int, h: int, w: int,
                   mode: str) -> np.ndarray:
    """Adjoint of _pad_hw: route padded-cell gradients back to the source."""
    if ph == 0 and pw == 0:
        return dxp
    if mode == "edge":
        # replicated cells contribute to their nearest interior cell; folding
        # rows first sends corner mass through the edge rows into the corners
        if ph:
            dxp[:, ph, :, :] += dxp[:, :ph, :, :].sum(axis=1)
            dxp[:, ph + h - 1, :, :] += dxp[:, ph + h :, :, :].sum(axis=1)
        if pw:
            dxp[:, :, pw, :] += dxp[:, :, :pw, :].sum(axis=2)
            dxp[:, :, pw + w - 1, :] += dxp[:, :, pw + w :, :].sum(axis=2)
    return dxp[:, ph : ph + h, pw : pw + w, :]


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: str = "same") -> Tensor:
    """Dense 2-D convolution.  x: (B,H,W,Cin), w: (kh,kw,Cin,Cout)."""
    x = as_tensor(x)
    w = as_tensor(w)
    kh, kw, cin, cout = w.shape
    if x.shape[-1] != cin:
        raise ValueError(f"channel mismatch: input {x.shape[-1]}, kernel {cin}")
    if padding == "same":
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")

    bsz, h, wd, _ = x.shape
    xp = _pad_hw(x.data, ph, pw)
    ho, wo = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1
    wdat = w.data
    out = np.zeros((bsz, ho, wo, cout), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i : i + ho, j : j + wo, :] @ wdat[i, j]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data

    def vjp_x(g):
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + ho, j : j + wo, :] += g @ wdat[i, j].T
        if ph or pw:
            return dxp[:, ph : ph + h, pw : pw + wd, :]
        return dxp

    def vjp_w(g):
        dw = np.zeros_like(wdat)
        for i in range(kh):
            for j in range(kw):
                dw[i, j] = np.einsum("bhwc,bhwd->cd", xp[:, i : i + ho, j : j + wo, :], g)
        return dw

    parents = [(x, vjp_x), (w, vjp_w)]
    if b is not None:
        parents.append((b, lambda g: g.sum(axis=(0, 1, 2))))
    return Tensor._make(out, parents, "conv2d")


def dwconv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: str = "same",
             pad_mode: str = "constant") -> Tensor:
    """Depthwise 2-D convolution.  x: (B,H,W,C), w: (kh,kw,C).

    pad_mode "constant" zero-pads the border; "edge" replicates it, which
    keeps spatially constant inputs constant under same padding.
    """
    x = as_tensor(x)
    w = as_tensor(w)
    kh, kw, c = w.shape
    if x.shape[-1] != c:
        raise ValueError(f"channel mismatch: input {x.shape[-1]}, kernel {c}")
    if padding == "same":
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")

    bsz, h, wd, _ = x.shape
    xp = _pad_hw(x.data, ph, pw, mode=pad_mode)
    ho, wo = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1
    wdat = w.data
    out = np.zeros((bsz, ho, wo, c), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i : i + ho, j : j + wo, :] * wdat[i, j]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data

    def vjp_x(g):
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + ho, j : j + wo, :] += g * wdat[i, j]
        return _fold_pad_grad(dxp, ph, pw, h, wd, pad_mode)

    def vjp_w(g):
        dw = np.zeros_like(wdat)
        for i in range(kh):
            for j in range(kw):
                dw[i, j] = (xp[:, i : i + ho, j : j + wo, :] * g).sum(axis=(0, 1, 2))
        return dw

    parents = [(x, vjp_x), (w, vjp_w)]
    if b is not None:
        parents.append((b, lambda g: g.sum(axis=(0, 1, 2))))
    return Tensor._make(out, parents, "dwconv2d")


def dwconv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Depthwise 1-D convolution along the sequence axis, same padding.

    x: (B,L,C), w: (k,C).
    """
    x = as_tensor(x)
    w = as_tensor(w)
    k, c = w.shape
    if x.shape[-1] != c:
        raise ValueError(f"channel mismatch: input {x.shape[-1]}, kernel {c}")
    p = k // 2
    bsz, length, _ = x.shape
    xp = np.pad(x.data, ((0, 0), (p, p), (0, 0))) if p else x.data
    wdat = w.data
    out = np.zeros((bsz, length, c), dtype=x.dtype)
    for i in range(k):
        out += xp[:, i : i + length, :] * wdat[i]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data

    def vjp_x(g):
        dxp = np.zeros_like(xp)
        for i in range(k):
            dxp[:, i : i + length, :] += g * wdat[i]
        return dxp[:, p : p + length, :] if p else dxp

    def vjp_w(g):
        dw = np.zeros_like(wdat)
        for i in range(k):
            dw[i] = (xp[:, i : i + length, :] * g).sum(axis=(0, 1))
        return dw

    parents = [(x, vjp_x), (w, vjp_w)]
    if b is not None:
        parents.append((b, lambda g: g.sum(axis=(0, 1))))
    return Tensor._make(out, parents, "dwconv1d")


def upsample2_nearest(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x spatial upsampling of (B,H,W,C)."""
    x = as_tensor(x)
    bsz, h, w, c = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def vjp(g):
        return g.reshape(bsz, h, 2, w, 2, c).sum(axis=(2, 4))

    return Tensor._make(out, [(x, vjp)], "upsample2")


def resize_linear(x: Tensor, new_len: int, axis: int) -> Tensor:
    """Linear (align-corners) resampling of one axis to ``new_len``."""
    x = as_tensor(x)
    src = x.shape[axis]
    if src == new_len:
        return x
    if src == 1:
        # constant extension; gradient sums back over the copies
        return x.take(np.zeros(new_len, dtype=int), axis)
    pos = np.linspace(0.0, src - 1.0, new_len)
    i0 = np.floor(pos).astype(int)
    i0 = np.minimum(i0, src - 2)
    i1 = i0 + 1
    frac = pos - i0
    shape = [1] * x.ndim
    shape[axis] = new_len
    frac = frac.reshape(shape)
    return x.take(i0, axis) * (1.0 - frac) + x.take(i1, axis) * frac


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear (align-corners) resize of (B,H,W,C) to (B,out_h,out_w,C).

    Separable: one linear pass per spatial axis.
    """
    return resize_linear(resize_linear(x, out_h, axis=1), out_w, axis=2)
