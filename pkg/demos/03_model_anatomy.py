#!/usr/bin/env python3
"""What one forward pass produces, and what it costs.

Runs a small predictor over a window of frames and walks through each
output: the predicted next frame, the predicted motion residual, and the
decomposed feature pair the separation loss pushes apart.  Ends with the
parameter and FLOPs ledger used by the profiler.
"""

import numpy as np

from ssvad.autodiff import Tensor
from ssvad.evaluate import count_params, estimate_flops
from ssvad.model import AnomalyPredictor, ModelConfig

cfg = ModelConfig(frame_hw=(32, 32), k=8, d_model=32, state_size=8,
                  n_blocks=1, patch_resolutions=(4, 8, 16),
                  temporal_windows=(2, 4, 8), memory_slots=8,
                  dtype="float32")
model = AnomalyPredictor(cfg, np.random.default_rng(0))

rng = np.random.default_rng(1)
window = rng.uniform(0, 1, (1, cfg.k, 32, 32, 3)).astype(np.float32)
out = model(Tensor(window))

print("== outputs of one window ==")
print(f"input            {window.shape}   (batch, k frames, H, W, RGB)")
print(f"v_hat            {out.v_hat.shape}  next-frame prediction in (0, 1)")
print(f"m_hat            {out.m_hat.shape}  motion prediction in (-1, 1)")
print(f"f_app / f_motion {out.f_app.shape} / {out.f_motion.shape}  decomposed features")
print(f"v_hat range      [{float(out.v_hat.data.min()):.3f}, {float(out.v_hat.data.max()):.3f}]")
print(f"m_hat range      [{float(out.m_hat.data.min()):.3f}, {float(out.m_hat.data.max()):.3f}]")

print()
print("== the two streams feed one fused token field ==")
sp = model.spatial(Tensor(window))
tm = model.temporal(Tensor(window))
print(f"spatial stream   {sp.shape}  per-frame multi-scale tokens")
print(f"temporal stream  {tm.shape}  motion tokens from frame differences")

print()
print("== cost ledger ==")
n = count_params(model)
flops = estimate_flops(model)
print(f"parameters: {n:,} ({n / 1e6:.3f} M)")
for key in ("spatial", "temporal", "decompose", "memory", "decoders"):
    print(f"  {key:10s} {flops[key] / 1e6:10.1f} MFLOPs")
print(f"  {'total':10s} {flops['total'] / 1e6:10.1f} MFLOPs per window")
print("Convention: 1 MAC = 2 FLOPs; scan cells cost 5 MACs each;")
print("activations and normalizations are excluded.")
