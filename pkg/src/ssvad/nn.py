"""Trainable layers and the optimizer, built on the autodiff Tensor.

Modules discover their parameters by walking instance attributes (tensors,
child modules, and lists of either), so construction order fixes the
parameter order and checkpoint layout.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autodiff import Tensor
from .ops import conv2d, dwconv1d, dwconv2d

__all__ = [
    "Module",
    "Linear",
    "LayerNorm",
    "Mlp",
    "Conv2d",
    "DepthwiseConv2d",
    "DepthwiseConv1d",
    "sinusoidal_positions",
    "Adam",
]


class Module:
    """Base class: parameter discovery, state export, grad clearing."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{name}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{prefix}{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing} extra={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()


def _uniform(rng: np.random.Generator, shape, bound: float, dtype) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class Linear(Module):
    """Affine map on the last axis: y = x @ W + b."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, dtype=np.float64):
        bound = 1.0 / np.sqrt(d_in)
        self.weight = _uniform(rng, (d_in, d_out), bound, dtype)
        self.bias = _uniform(rng, (d_out,), bound, dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    """Normalizes the last axis to zero mean / unit variance, then affine."""

    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float64):
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc / (var + self.eps).sqrt() * self.gamma + self.beta


class Mlp(Module):
    """Two-layer perceptron with SiLU in between."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int,
                 rng: np.random.Generator, dtype=np.float64):
        self.fc1 = Linear(d_in, d_hidden, rng, dtype=dtype)
        self.fc2 = Linear(d_hidden, d_out, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).silu())


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 padding: str = "same", dtype=np.float64):
        bound = 1.0 / np.sqrt(c_in * kernel * kernel)
        self.weight = _uniform(rng, (kernel, kernel, c_in, c_out), bound, dtype)
        self.bias = _uniform(rng, (c_out,), bound, dtype)
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, padding=self.padding)


class DepthwiseConv2d(Module):
    def __init__(self, channels: int, kernel: int, rng: np.random.Generator,
                 dtype=np.float64):
        bound = 1.0 / np.sqrt(kernel * kernel)
        self.weight = _uniform(rng, (kernel, kernel, channels), bound, dtype)
        self.bias = _uniform(rng, (channels,), bound, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return dwconv2d(x, self.weight, self.bias, padding="same")


class DepthwiseConv1d(Module):
    def __init__(self, channels: int, kernel: int, rng: np.random.Generator,
                 dtype=np.float64):
        bound = 1.0 / np.sqrt(kernel)
        self.weight = _uniform(rng, (kernel, channels), bound, dtype)
        self.bias = _uniform(rng, (channels,), bound, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return dwconv1d(x, self.weight, self.bias)


def sinusoidal_positions(n: int, dim: int, dtype=np.float64) -> np.ndarray:
    """Fixed sine/cosine position table of shape (n, dim)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    idx = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / dim)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)


class Adam:
    """Adam with bias correction; moment buffers are exported for resume."""

    def __init__(self, params: list[Tensor], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self._params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self._params]
        self.v = [np.zeros_like(p.data) for p in self._params]

    def zero_grad(self):
        for p in self._params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, m, v in zip(self._params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.t": np.array([self.t], dtype=np.float64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"adam.m.{i}"] = m
            out[f"adam.v.{i}"] = v
        return out

    def load_state_arrays(self, state: dict[str, np.ndarray]):
        self.t = int(round(float(state["adam.t"][0])))
        for i in range(len(self._params)):
            m = np.asarray(state[f"adam.m.{i}"], dtype=self.m[i].dtype)
            v = np.asarray(state[f"adam.v.{i}"], dtype=self.v[i].dtype)
            if m.shape != self.m[i].shape or v.shape != self.v[i].shape:
                raise ValueError(f"adam moment {i}: shape mismatch")
            self.m[i] = m.copy()
            self.v[i] = v.copy()
