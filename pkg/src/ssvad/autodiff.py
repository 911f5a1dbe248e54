"""Reverse-mode automatic differentiation over numpy arrays.

The engine is deliberately small: a ``Tensor`` wraps an ``np.ndarray`` and
records, for every produced value, the parent tensors together with one
vector-Jacobian-product closure per parent.  ``Tensor.backward`` walks the
recorded graph once in reverse topological order and accumulates gradients
into ``.grad``.

Everything here is a pure function of (inputs, parameters); tensors are
never mutated in place by ops.  Gradients use the same dtype as the data:
strict finite-difference checks should build float64 graphs, production
paths may run float32.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "no_grad",
    "is_grad_enabled",
    "concat",
    "stack",
    "gradient_check",
]

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording inside its body."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """An array node in the autodiff graph.

    Parameters carry ``requires_grad=True``; results of ops on them inherit
    the flag while grad recording is enabled.  ``_parents`` holds
    ``(parent, vjp)`` pairs where ``vjp`` maps the upstream gradient to the
    gradient contribution for that parent (already shaped like the parent).
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_op")

    def __init__(self, data, requires_grad: bool = False, parents=(), op: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._op = op

    # ---- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        head = f"Tensor(shape={self.shape}, dtype={self.dtype}"
        if self._op:
            head += f", op={self._op}"
        return head + (", grad" if self.requires_grad else "") + ")"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # ---- backward ------------------------------------------------------------

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable ``.grad``.

        Uses an iterative topological sort; graphs produced by long scans
        exceed the recursion limit otherwise.
        """
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = g if node.grad is None else node.grad + g
            for parent, vjp in node._parents:
                contrib = vjp(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib

    # ---- graph construction helper -------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence[tuple["Tensor", Callable]], op: str) -> "Tensor":
        if _GRAD_ENABLED:
            live = [(p, fn) for p, fn in parents if p.requires_grad or p._parents]
            if live:
                return Tensor(data, requires_grad=True, parents=live, op=op)
        return Tensor(data)

    # ---- elementwise arithmetic ----------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, dtype=self.dtype)
        out = self.data + other.data
        return Tensor._make(
            out,
            [
                (self, lambda g: _unbroadcast(g, self.shape)),
                (other, lambda g: _unbroadcast(g, other.shape)),
            ],
            "add",
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, [(self, lambda g: -g)], "neg")

    def __sub__(self, other):
        other = as_tensor(other, dtype=self.dtype)
        out = self.data - other.data
        return Tensor._make(
            out,
            [
                (self, lambda g: _unbroadcast(g, self.shape)),
                (other, lambda g: _unbroadcast(-g, other.shape)),
            ],
            "sub",
        )

    def __rsub__(self, other):
        return as_tensor(other, dtype=self.dtype) - self

    def __mul__(self, other):
        other = as_tensor(other, dtype=self.dtype)
        out = self.data * other.data
        a, b = self.data, other.data
        return Tensor._make(
            out,
            [
                (self, lambda g: _unbroadcast(g * b, self.shape)),
                (other, lambda g: _unbroadcast(g * a, other.shape)),
            ],
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other, dtype=self.dtype)
        a, b = self.data, other.data
        out = a / b
        return Tensor._make(
            out,
            [
                (self, lambda g: _unbroadcast(g / b, self.shape)),
                (other, lambda g: _unbroadcast(-g * a / (b * b), other.shape)),
            ],
            "div",
        )

    def __rtruediv__(self, other):
        return as_tensor(other, dtype=self.dtype) / self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only constant exponents are supported")
        a = self.data
        out = a**p
        return Tensor._make(out, [(self, lambda g: g * p * a ** (p - 1))], "pow")

    # ---- elementwise functions -----------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, [(self, lambda g: g * out)], "exp")

    def log(self):
        a = self.data
        return Tensor._make(np.log(a), [(self, lambda g: g / a)], "log")

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._make(out, [(self, lambda g: g * 0.5 / out)], "sqrt")

    def abs(self):
        a = self.data
        return Tensor._make(np.abs(a), [(self, lambda g: g * np.sign(a))], "abs")

    def sigmoid(self):
        s = _sigmoid(self.data)
        return Tensor._make(s, [(self, lambda g: g * s * (1.0 - s))], "sigmoid")

    def silu(self):
        a = self.data
        s = _sigmoid(a)
        out = a * s
        return Tensor._make(out, [(self, lambda g: g * (s + a * s * (1.0 - s)))], "silu")

    def tanh(self):
        t = np.tanh(self.data)
        return Tensor._make(t, [(self, lambda g: g * (1.0 - t * t))], "tanh")

    # ---- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self.data
        out = a.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            if axis is None:
                return np.broadcast_to(g, a.shape).astype(a.dtype, copy=False)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(g2, a.shape).astype(a.dtype, copy=False)

        return Tensor._make(out, [(self, vjp)], "sum")

    def mean(self, axis=None, keepdims: bool = False):
        a = self.data
        if axis is None:
            n = a.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = 1
            for ax in axes:
                n *= a.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ---- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a_shape = self.shape
        out = self.data.reshape(shape)
        return Tensor._make(out, [(self, lambda g: g.reshape(a_shape))], "reshape")

    def transpose(self, axes: Sequence[int]):
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        out = self.data.transpose(axes)
        return Tensor._make(out, [(self, lambda g: g.transpose(inv))], "transpose")

    def flip(self, axis: int):
        out = np.flip(self.data, axis=axis)
        return Tensor._make(out, [(self, lambda g: np.flip(g, axis=axis))], "flip")

    def __getitem__(self, key):
        a = self.data
        out = a[key]

        def vjp(g):
            full = np.zeros_like(a)
            np.add.at(full, key, g)
            return full

        return Tensor._make(out, [(self, vjp)], "getitem")

    def take(self, indices: np.ndarray, axis: int):
        """Differentiable ``np.take`` along one axis (1-D integer indices)."""
        idx = np.asarray(indices)
        a = self.data
        out = np.take(a, idx, axis=axis)

        def vjp(g):
            full = np.zeros_like(a)
            key = (slice(None),) * axis + (idx,)
            np.add.at(full, key, g)
            return full

        return Tensor._make(out, [(self, vjp)], "take")

    # ---- matmul --------------------------------------------------------------

    def __matmul__(self, other):
        other = as_tensor(other, dtype=self.dtype)
        a, b = self.data, other.data
        out = a @ b

        def vjp_a(g):
            return _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)

        def vjp_b(g):
            return _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)

        return Tensor._make(out, [(self, vjp_a), (other, vjp_b)], "matmul")


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None and arr.dtype != dtype and np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(dtype)
    elif dtype is not None and not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(dtype)
    return Tensor(arr)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    parents = []
    for i, t in enumerate(tensors):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g, lo=lo, hi=hi):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        parents.append((t, vjp))
    return Tensor._make(out, parents, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    parents = []
    for i, t in enumerate(tensors):

        def vjp(g, i=i):
            return np.take(g, i, axis=axis)

        parents.append((t, vjp))
    return Tensor._make(out, parents, "stack")


def gradient_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    step: float = 1e-4,
) -> float:
    """Compare analytic gradients of ``fn(*inputs)`` against central differences.

    ``fn`` must return a scalar Tensor and be deterministic.  Returns the
    worst relative error ``||g_a - g_n|| / max(||g_a||, ||g_n||, 1e-12)``
    over the supplied inputs.  Intended for tiny float64 configurations.
    """
    for t in inputs:
        t.zero_grad()
        t.data = np.ascontiguousarray(t.data)
    out = fn(*inputs)
    if out.size != 1:
        raise ValueError("gradient_check requires a scalar output")
    out.backward()

    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            with no_grad():
                f_plus = float(fn(*inputs).data)
            flat[i] = orig - step
            with no_grad():
                f_minus = float(fn(*inputs).data)
            flat[i] = orig
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        err = np.linalg.norm(analytic - numeric) / denom
        worst = max(worst, float(err))
    return worst
