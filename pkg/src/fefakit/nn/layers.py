"""Stateful layer objects wrapping :mod:`fefakit.nn.functional`.

A layer keeps the cache of its last ``forward`` call; ``backward`` consumes
it, fills ``layer.grads`` (same keys as ``layer.params``) and returns the
gradient w.r.t. the layer input.
"""

from __future__ import annotations

import math

import numpy as np

from fefakit import fefa as F
from fefakit.nn import functional as fn


def he_uniform(rng, shape, fan_in):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    reduces = False  # True when the layer shrinks the frequency axis

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_height(self, h):
        return h

    def children(self):
        return []

    def named_params(self, prefix=""):
        for name, value in self.params.items():
            yield prefix + name, value
        for child_name, child in self.children():
            yield from child.named_params(f"{prefix}{child_name}.")

    def named_grads(self, prefix=""):
        for name in self.params:
            yield prefix + name, self.grads[name]
        for child_name, child in self.children():
            yield from child.named_grads(f"{prefix}{child_name}.")

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv2d(Layer):
    def __init__(self, cin, cout, kernel_size=3, stride=1, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = cin * kernel_size * kernel_size
        self.params["weight"] = he_uniform(rng, (cout, cin, kernel_size, kernel_size), fan_in)
        self.params["bias"] = np.zeros(cout)
        self.stride = stride
        self.reduces = stride > 1

    def forward(self, x):
        out, self._cache = fn.conv2d_forward(x, self.params["weight"], self.params["bias"],
                                             self.stride)
        return out

    def backward(self, dout, need_input_grad=True):
        dx, self.grads["weight"], self.grads["bias"] = fn.conv2d_backward(
            dout, self._cache, need_input_grad)
        return dx

    def output_height(self, h):
        return -(-h // self.stride)

    def __repr__(self):
        cout, cin, k, _ = self.params["weight"].shape
        return f"Conv2d({cin}, {cout}, k={k}, stride={self.stride})"


class ReLU(Layer):
    def forward(self, x):
        out, self._mask = fn.relu_forward(x)
        return out

    def backward(self, dout):
        return fn.relu_backward(dout, self._mask)


class MaxPool2x2(Layer):
    reduces = True

    def forward(self, x):
        out, self._cache = fn.maxpool2x2_forward(x)
        return out

    def backward(self, dout):
        return fn.maxpool2x2_backward(dout, self._cache)

    def output_height(self, h):
        return h // 2


class GlobalAvgPool(Layer):
    def forward(self, x):
        out, self._shape = fn.global_avg_pool_forward(x)
        return out

    def backward(self, dout):
        return fn.global_avg_pool_backward(dout, self._shape)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = he_uniform(rng, (n_out, n_in), n_in)
        self.params["bias"] = np.zeros(n_out)

    def forward(self, x):
        out, self._x = fn.dense_forward(x, self.params["weight"], self.params["bias"])
        return out

    def backward(self, dout):
        dx, self.grads["weight"], self.grads["bias"] = fn.dense_backward(
            dout, self._x, self.params["weight"])
        return dx

    def __repr__(self):
        n_out, n_in = self.params["weight"].shape
        return f"Dense({n_in}, {n_out})"


class SEBlock(Layer):
    """Channel gating with a bias-free ``C -> C/r -> C`` bottleneck."""

    def __init__(self, channels, reduction=4, rng=None):
        super().__init__()
        if channels % reduction:
            raise ValueError(f"{channels} channels not divisible by reduction {reduction}")
        rng = rng if rng is not None else np.random.default_rng(0)
        hidden = channels // reduction
        self.params["w1"] = he_uniform(rng, (hidden, channels), channels)
        self.params["w2"] = he_uniform(rng, (channels, hidden), hidden)

    def forward(self, x):
        out, self._cache = fn.se_forward(x, self.params["w1"], self.params["w2"])
        return out

    def backward(self, dout):
        dx, self.grads["w1"], self.grads["w2"] = fn.se_backward(
            dout, self._cache, self.params["w1"], self.params["w2"])
        return dx


class ResidualBlock(Layer):
    """conv3x3(stride) - relu - conv3x3 [- SE] + shortcut, then relu.

    The shortcut is the identity, or a strided 1x1 projection when the
    channel count or resolution changes.
    """

    def __init__(self, cin, cout, stride=1, se_reduction=None, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.conv1 = Conv2d(cin, cout, 3, stride, rng)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(cout, cout, 3, 1, rng)
        self.se = SEBlock(cout, se_reduction, rng) if se_reduction else None
        needs_proj = cin != cout or stride != 1
        self.shortcut = Conv2d(cin, cout, 1, stride, rng) if needs_proj else None
        self.relu_out = ReLU()
        self.stride = stride
        self.reduces = stride > 1

    def children(self):
        kids = [("conv1", self.conv1), ("conv2", self.conv2)]
        if self.se is not None:
            kids.append(("se", self.se))
        if self.shortcut is not None:
            kids.append(("shortcut", self.shortcut))
        return kids

    def forward(self, x):
        out = self.conv2.forward(self.relu1.forward(self.conv1.forward(x)))
        if self.se is not None:
            out = self.se.forward(out)
        skip = self.shortcut.forward(x) if self.shortcut is not None else x
        out, _ = fn.residual_add_forward(out, skip)
        return self.relu_out.forward(out)

    def backward(self, dout):
        d = self.relu_out.backward(dout)
        d_main, d_skip = fn.residual_add_backward(d)
        if self.se is not None:
            d_main = self.se.backward(d_main)
        dx = self.conv1.backward(self.relu1.backward(self.conv2.backward(d_main)))
        if self.shortcut is not None:
            d_skip = self.shortcut.backward(d_skip)
        return dx + d_skip

    def output_height(self, h):
        return -(-h // self.stride)

    def __repr__(self):
        cout, cin = self.conv1.params["weight"].shape[:2]
        se = ", se" if self.se is not None else ""
        return f"ResidualBlock({cin}, {cout}, stride={self.stride}{se})"


class FefaLayer(Layer):
    """One FEFA placement inside a network."""

    def __init__(self, fefa_params: F.FefaParams, scale_mode="preserve"):
        super().__init__()
        self.fefa = fefa_params
        self.scale_mode = scale_mode
        self.params["weights"] = fefa_params.weights
        self.params["bias"] = fefa_params.bias
        self._mask = fefa_params.tap_mask()
        self.last_p = None

    @property
    def placement_id(self):
        return self.fefa.placement_id

    def forward(self, x):
        out, self._cache = F.fefa_forward(x, self.fefa, self.scale_mode)
        self.last_p = self._cache.p
        return out

    def backward(self, dout):
        dx, dw, db = F.fefa_backward(dout, self._cache, self.fefa)
        self.grads["weights"] = dw * self._mask
        self.grads["bias"] = db
        return dx

    def __repr__(self):
        return f"FefaLayer({self.placement_id!r}, bins={self.fefa.bins})"
