"""
The frequency attention layer on its own
========================================

Squeeze a spectrogram over time, score every bin with one affine layer,
turn the scores into a distribution over bins and re-weight the rows.
"""

import numpy as np

from fefakit import fefa as F
from fefakit.fefa import FefaParams

rng = np.random.default_rng(0)
spec = rng.random((8, 5))

# Zero-initialised parameters give uniform attention, and preserve mode
# multiplies by the number of bins, so the layer starts as the identity.
params = FefaParams.zeros(8)
out, cache = F.fefa_forward(spec, params, "preserve")
print("uniform p:", np.round(cache.p[0], 4))
print("identity at init:", np.allclose(out, spec, rtol=1e-12))

# A kernel that favours bin 2.
params.bias[2] = 3.0
out, cache = F.fefa_forward(spec, params, "preserve")
print("p with a bias on bin 2:", np.round(cache.p[0], 3), "sum", cache.p.sum())
print("row gains:", np.round(out[:, 0] / spec[:, 0], 3))

# Feature maps: channels are averaged first, then one p is shared by all channels.
fmap = rng.random((4, 8, 6))
out, cache = F.fefa_forward(fmap, params)
print("tensor path output shape:", out.shape)

# Backward pass: exact gradients for input, weights and bias.
g = rng.standard_normal(out.shape)
gx, gw, gb = F.fefa_backward(g, cache, params)
print("gradient shapes:", gx.shape, gw.shape, gb.shape)

# Cost grows with the square of the bin count for full connectivity.
for bins in (64, 128, 257, 514):
    p = FefaParams.zeros(bins)
    print(f"bins={bins:4d} params={F.param_count(p):7d} MACs(frames=98)={F.count_macs(p, (bins, 98)):8d}")
local = FefaParams.zeros(257, "local", 9)
print("local window 9 at 257 bins:", F.param_count(local), "parameters")
