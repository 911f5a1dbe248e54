"""Selective state-space scan and the three encoder block types.

The scan is a diagonal recurrence with input-dependent gates.  Per channel d
and state lane s:

    h_t[d, s] = Abar[d, s] * h_{t-1}[d, s] + delta[d] * x_t[d] * gB_t[s]
    y_t[d]    = sum_s gC_t[s] * h_t[d, s]

where Abar = exp(-exp(delta) * lam) is the discretized decay, and
gB_t = sigmoid(x_t @ w_b), gC_t = sigmoid(x_t @ w_c) are the data-driven
input/output gates.  Cost is linear in sequence length; the whole scan is a
single autodiff primitive whose backward pass runs the recurrence in reverse
over a saved state stack.

Blocks built on the scan:

* ``VSSBlock``: residual image-token block (norm, expand, depthwise conv,
  SiLU, raster-order scan, multiplicative gate, project).
* ``MSVSSBlock``: VSSBlock fed by a sum of depthwise convolutions at several
  kernel sizes plus the identity.
* ``TMBlock``: residual per-token scan along the time axis with a fixed
  sinusoidal position table; bias-free so zero input maps to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, _sigmoid
from .nn import LayerNorm, Linear, Module, sinusoidal_positions
from .ops import dwconv2d

__all__ = [
    "SelectiveScanParams",
    "BlockConfig",
    "discretize",
    "selective_scan",
    "ScanParameters",
    "VSSBlock",
    "MSVSSBlock",
    "TMBlock",
]


@dataclass
class SelectiveScanParams:
    """Functional parameter bundle for one scan.

    delta: (D,) step sizes; lam: (D, S) diagonal decay rates; w_b, w_c:
    (D, S) gate projections.  w_in / w_out optionally mix channels before /
    after the recurrence.  All entries must be finite; lam > 0 makes the
    recurrence contractive.
    """

    delta: Tensor
    lam: Tensor
    w_b: Tensor
    w_c: Tensor
    w_in: Tensor | None = None
    w_out: Tensor | None = None

    def __post_init__(self):
        self.delta = as_tensor(self.delta)
        self.lam = as_tensor(self.lam)
        self.w_b = as_tensor(self.w_b)
        self.w_c = as_tensor(self.w_c)
        if self.w_in is not None:
            self.w_in = as_tensor(self.w_in)
        if self.w_out is not None:
            self.w_out = as_tensor(self.w_out)
        d = self.delta.shape[0]
        s = self.lam.shape[1] if self.lam.ndim == 2 else None
        if self.delta.ndim != 1 or self.lam.ndim != 2 or self.lam.shape[0] != d:
            raise ValueError("delta must be (D,), lam (D,S)")
        for name, w in (("w_b", self.w_b), ("w_c", self.w_c)):
            if w.shape != (d, s):
                raise ValueError(f"{name} must have shape ({d},{s}), got {w.shape}")
        for name, w in (("delta", self.delta), ("lam", self.lam),
                        ("w_b", self.w_b), ("w_c", self.w_c)):
            if not np.all(np.isfinite(w.data)):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def d_model(self) -> int:
        return self.delta.shape[0]

    @property
    def state_size(self) -> int:
        return self.lam.shape[1]


@dataclass
class BlockConfig:
    """Shared sizing for all block types."""

    d_model: int = 256
    state_size: int = 16
    dw_kernels: tuple[int, ...] = (1, 3, 5)
    n_blocks: int = 2
    expand: int = 2
    activation: str = "silu"

    def __post_init__(self):
        if any(k % 2 == 0 for k in self.dw_kernels):
            raise ValueError("dw_kernels must all be odd")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")


def discretize(params: SelectiveScanParams) -> Tensor:
    """Per-lane decay Abar = exp(-exp(delta) * lam), shape (D, S).

    Entries lie in (0, 1) whenever lam > 0, which bounds the state of the
    recurrence for bounded inputs.
    """
    a = -params.delta.exp().reshape(-1, 1) * params.lam
    return a.exp()


def _scan_primitive(x: Tensor, delta: Tensor, lam: Tensor, w_b: Tensor,
                    w_c: Tensor, h0: np.ndarray) -> Tensor:
    """Recurrence core on (B, L, D) input.  Custom VJP; see module docstring."""
    xd = x.data
    bsz, length, d = xd.shape
    s = lam.shape[1]
    dt, lm, wb, wc = delta.data, lam.data, w_b.data, w_c.data

    a_cont = -np.exp(dt)[:, None] * lm          # (D,S)
    abar = np.exp(a_cont)
    p = xd @ wb                                 # (B,L,S) gate pre-activations
    q = xd @ wc
    g = _sigmoid(p)
    c = _sigmoid(q)
    e = xd * dt                                 # (B,L,D) scaled input

    hs = np.empty((bsz, length, d, s), dtype=xd.dtype)
    h = np.broadcast_to(h0, (bsz, d, s)).astype(xd.dtype).copy()
    y = np.empty_like(xd)
    for t in range(length):
        h = abar * h + e[:, t, :, None] * g[:, t, None, :]
        hs[:, t] = h
        y[:, t] = np.einsum("bds,bs->bd", h, c[:, t])

    def vjp_all(dy):
        dh_next = np.zeros((bsz, d, s), dtype=xd.dtype)
        d_abar = np.zeros_like(abar)
        d_delta_direct = np.zeros_like(dt)
        dx = np.zeros_like(xd)
        dp = np.empty((bsz, length, s), dtype=xd.dtype)
        dq = np.empty((bsz, length, s), dtype=xd.dtype)
        for t in range(length - 1, -1, -1):
            ht = hs[:, t]
            dyt = dy[:, t]
            dct = np.einsum("bd,bds->bs", dyt, ht)
            dht = dh_next + dyt[:, :, None] * c[:, t, None, :]
            h_prev = hs[:, t - 1] if t > 0 else np.broadcast_to(h0, (bsz, d, s))
            d_abar += np.einsum("bds,bds->ds", dht, h_prev)
            det = np.einsum("bds,bs->bd", dht, g[:, t])
            dgt = np.einsum("bds,bd->bs", dht, e[:, t])
            dx[:, t] += det * dt
            d_delta_direct += (det * xd[:, t]).sum(axis=0)
            dp[:, t] = dgt * g[:, t] * (1.0 - g[:, t])
            dq[:, t] = dct * c[:, t] * (1.0 - c[:, t])
            dh_next = abar * dht
        dx += dp @ wb.T + dq @ wc.T
        da = d_abar * abar
        d_delta = d_delta_direct + (da * a_cont).sum(axis=1)
        d_lam = da * (-np.exp(dt))[:, None]
        dw_b = np.einsum("bld,bls->ds", xd, dp)
        dw_c = np.einsum("bld,bls->ds", xd, dq)
        return dx, d_delta, d_lam, dw_b, dw_c

    cache: dict = {}

    def shared(dy, slot):
        # one backward sweep serves all five parents
        if cache.get("ref") is not dy:
            cache["ref"] = dy
            cache["grads"] = vjp_all(dy)
        return cache["grads"][slot]

    parents = [
        (x, lambda gr: shared(gr, 0)),
        (delta, lambda gr: shared(gr, 1)),
        (lam, lambda gr: shared(gr, 2)),
        (w_b, lambda gr: shared(gr, 3)),
        (w_c, lambda gr: shared(gr, 4)),
    ]
    return Tensor._make(y, parents, "selective_scan")


def selective_scan(x, params: SelectiveScanParams, h0=None) -> Tensor:
    """Run the selective recurrence over a sequence.

    x: (L, D) or batched (B, L, D).  h0: optional initial state (D, S),
    default zero.  Returns the same shape as x.
    """
    x = as_tensor(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3:
        raise ValueError(f"expected (L,D) or (B,L,D), got {x.shape}")
    if params.w_in is not None:
        x = x @ params.w_in
    d, s = params.d_model, params.state_size
    if x.shape[2] != d:
        raise ValueError(f"channel dim {x.shape[2]} != parameter D={d}")
    if h0 is None:
        h0_arr = np.zeros((d, s), dtype=x.dtype)
    else:
        h0_arr = np.asarray(h0.data if isinstance(h0, Tensor) else h0, dtype=x.dtype)
        if h0_arr.shape != (d, s):
            raise ValueError(f"h0 must be ({d},{s}), got {h0_arr.shape}")
        if not np.all(np.isfinite(h0_arr)):
            raise ValueError("non-finite initial state")
    y = _scan_primitive(x, params.delta, params.lam, params.w_b, params.w_c, h0_arr)
    if params.w_out is not None:
        y = y @ params.w_out
    return y.reshape(y.shape[1:]) if squeeze else y


class ScanParameters(Module):
    """Trainable scan parameters; lam is kept positive via its log."""

    def __init__(self, d_model: int, state_size: int, rng: np.random.Generator,
                 mix: bool = False, dtype=np.float64):
        self.delta = Tensor(rng.uniform(0.1, 0.5, d_model).astype(dtype),
                            requires_grad=True)
        self.log_lam = Tensor(
            rng.uniform(np.log(0.25), np.log(1.0), (d_model, state_size)).astype(dtype),
            requires_grad=True)
        bound = 1.0 / np.sqrt(d_model)
        self.w_b = Tensor(rng.uniform(-bound, bound, (d_model, state_size)).astype(dtype),
                          requires_grad=True)
        self.w_c = Tensor(rng.uniform(-bound, bound, (d_model, state_size)).astype(dtype),
                          requires_grad=True)
        if mix:
            self.w_in = Tensor(rng.uniform(-bound, bound, (d_model, d_model)).astype(dtype),
                               requires_grad=True)
            self.w_out = Tensor(rng.uniform(-bound, bound, (d_model, d_model)).astype(dtype),
                                requires_grad=True)
        else:
            self.w_in = None
            self.w_out = None

    def functional(self) -> SelectiveScanParams:
        return SelectiveScanParams(
            delta=self.delta, lam=self.log_lam.exp(),
            w_b=self.w_b, w_c=self.w_c, w_in=self.w_in, w_out=self.w_out)

    def __call__(self, x, h0=None) -> Tensor:
        return selective_scan(x, self.functional(), h0=h0)


class VSSBlock(Module):
    """Residual selective-scan block over a 2-D token grid.

    tokens (B, N, D) with N = grid_h * grid_w in raster order.  The scan
    visits tokens in that same raster order.
    """

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator, dtype=np.float64):
        d = cfg.d_model
        inner = cfg.expand * d
        self.norm = LayerNorm(d, dtype=dtype)
        self.expand = Linear(d, inner, rng, dtype=dtype)
        self.gate = Linear(d, inner, rng, dtype=dtype)
        bound = 1.0 / 3.0
        self.dw_weight = Tensor(rng.uniform(-bound, bound, (3, 3, inner)).astype(dtype),
                                requires_grad=True)
        self.scan = ScanParameters(inner, cfg.state_size, rng, dtype=dtype)
        self.project = Linear(inner, d, rng, dtype=dtype)

    def __call__(self, tokens: Tensor, grid_hw: tuple[int, int]) -> Tensor:
        tokens = as_tensor(tokens)
        squeeze = tokens.ndim == 2
        if squeeze:
            tokens = tokens.reshape(1, *tokens.shape)
        bsz, n, d = tokens.shape
        gh, gw = grid_hw
        if gh * gw != n:
            raise ValueError(f"grid {gh}x{gw} does not cover {n} tokens")
        xn = self.norm(tokens)
        v = self.expand(xn)
        inner = v.shape[-1]
        v = v.reshape(bsz, gh, gw, inner)
        v = dwconv2d(v, self.dw_weight, padding="same")
        v = v.reshape(bsz, n, inner).silu()
        v = self.scan(v)
        v = v * self.gate(xn).silu()
        out = tokens + self.project(v)
        return out.reshape(n, d) if squeeze else out


class MSVSSBlock(Module):
    """VSSBlock preceded by a multi-kernel depthwise-conv mixer.

    The mixer sums bias-free depthwise convolutions of the token grid at each
    configured kernel size (edge padding, so constant fields stay constant)
    and adds the identity branch before the residual block.
    """

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator, dtype=np.float64):
        d = cfg.d_model
        self.branch_weights = []
        for k in cfg.dw_kernels:
            bound = 1.0 / k
            w = Tensor(rng.uniform(-bound, bound, (k, k, d)).astype(dtype),
                       requires_grad=True)
            self.branch_weights.append(w)
        self.block = VSSBlock(cfg, rng, dtype=dtype)

    def mix(self, patches: Tensor, grid_hw: tuple[int, int]) -> Tensor:
        """The conv-sum X for input P; returns X + P ready for the block."""
        patches = as_tensor(patches)
        squeeze = patches.ndim == 2
        if squeeze:
            patches = patches.reshape(1, *patches.shape)
        bsz, n, d = patches.shape
        gh, gw = grid_hw
        if gh * gw != n:
            raise ValueError(f"grid {gh}x{gw} does not cover {n} tokens")
        grid = patches.reshape(bsz, gh, gw, d)
        acc = None
        for w in self.branch_weights:
            y = dwconv2d(grid, w, padding="same", pad_mode="edge")
            acc = y if acc is None else acc + y
        mixed = (acc + grid).reshape(bsz, n, d)
        return mixed.reshape(n, d) if squeeze else mixed

    def __call__(self, patches: Tensor, grid_hw: tuple[int, int]) -> Tensor:
        return self.block(self.mix(patches, grid_hw), grid_hw)


class TMBlock(Module):
    """Residual time-axis scan applied independently to every spatial token.

    Input (w, N, D) or (B, w, N, D): w time steps of N tokens.  A fixed
    sinusoidal table over the time axis is added, then each token's length-w
    series runs through the scan with this block's parameters.  The scan path
    is bias-free, so zero input with zero table maps to zero before the
    residual add.
    """

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator,
                 max_steps: int = 64, dtype=np.float64):
        self.scan = ScanParameters(cfg.d_model, cfg.state_size, rng,
                                   mix=True, dtype=dtype)
        self.pe = Tensor(sinusoidal_positions(max_steps, cfg.d_model, dtype=dtype))
        self.pe_scale = Tensor(np.full(1, 0.1, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        squeeze = x.ndim == 3
        if squeeze:
            x = x.reshape(1, *x.shape)
        bsz, w, n, d = x.shape
        if w > self.pe.shape[0]:
            raise ValueError(f"sequence {w} exceeds position table {self.pe.shape[0]}")
        pe = self.pe[:w].reshape(1, w, 1, d) * self.pe_scale
        h = x + pe
        # fold tokens into the batch: every token scans its own time series
        h = h.transpose((0, 2, 1, 3)).reshape(bsz * n, w, d)
        y = self.scan(h)
        y = y.reshape(bsz, n, w, d).transpose((0, 2, 1, 3))
        out = x + y
        return out.reshape(w, n, d) if squeeze else out
