"""Fine-grained early frequency attention (FEFA).

A FEFA placement squeezes its input (channels, then time) into one value per
frequency bin, scores the bins with a single affine layer, turns the scores
into a probability over bins with a softmax and re-weights every bin of the
input by its probability.  Everything here operates on float64 arrays and
comes with exact reverse-mode gradients.

Shapes: a spectrogram is ``bins x frames``; a feature map is ``C x H x W``
with ``H`` the frequency axis.  The batched internals use ``N x C x H x W``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCALE_MODES = ("preserve", "literal")
CONNECTIVITIES = ("full", "local")


@dataclass
class FefaParams:
    """Kernel weights and bias of one FEFA placement.

    For ``connectivity="full"`` ``weights`` is ``bins x bins``.  For
    ``"local"`` it is ``bins x window``; row ``i`` holds the taps for inputs
    ``i - window//2 .. i + window//2``.  Taps that fall outside ``[0, bins)``
    are not instantiated: they stay zero and receive no gradient.
    """

    weights: np.ndarray
    bias: np.ndarray
    connectivity: str = "full"
    window: int | None = None
    placement_id: str = "input"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.connectivity not in CONNECTIVITIES:
            raise ValueError(f"unknown connectivity {self.connectivity!r}")
        bins = self.bias.shape[0] if self.bias.ndim == 1 else 0
        if bins < 1:
            raise ValueError("bias must be a non-empty vector")
        if self.connectivity == "full":
            expected = (bins, bins)
        else:
            w = self.window
            if w is None or w < 1 or w % 2 == 0 or w > bins:
                raise ValueError("local window must be odd and in [1, bins]")
            expected = (bins, w)
        if self.weights.shape != expected:
            raise ValueError(
                f"weights shape {self.weights.shape}, expected {expected}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("FEFA parameters must be finite")

    @classmethod
    def zeros(cls, bins: int, connectivity: str = "full", window: int | None = None,
              placement_id: str = "input") -> "FefaParams":
        cols = bins if connectivity == "full" else window
        if cols is None:
            raise ValueError("local connectivity needs a window")
        return cls(np.zeros((bins, cols)), np.zeros(bins), connectivity,
                   window if connectivity == "local" else None, placement_id)

    @property
    def bins(self) -> int:
        return self.bias.shape[0]

    def tap_mask(self) -> np.ndarray:
        """Boolean mask of instantiated weights."""
        if self.connectivity == "full":
            return np.ones(self.weights.shape, dtype=bool)
        return local_tap_mask(self.bins, self.window)


def local_tap_mask(bins: int, window: int) -> np.ndarray:
    half = window // 2
    src = np.arange(bins)[:, None] + np.arange(window)[None, :] - half
    return (src >= 0) & (src < bins)


@dataclass
class FefaCache:
    x: np.ndarray          # N x C x H x W input
    squeezed: np.ndarray   # N x H
    logits: np.ndarray     # N x H
    p: np.ndarray          # N x H
    scale: float
    in_shape: tuple


@dataclass
class BaselineAttnParams:
    """Scoring matrix and key/value memory of a generic soft attention."""

    w_key: np.ndarray      # key_dim x query_dim
    keys: np.ndarray       # M x key_dim
    values: np.ndarray     # M x value_dim


def squeeze_time(spec) -> np.ndarray:
    """Mean over the last (time) axis."""
    spec = np.asarray(spec, dtype=np.float64)
    if spec.ndim < 1 or spec.shape[-1] < 1 or spec.size == 0:
        raise ValueError("cannot squeeze an empty input")
    return spec.mean(axis=-1)


def squeeze_channels(fmap) -> np.ndarray:
    """Channel-wise average pool of a ``C x H x W`` (or batched) map."""
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim < 3 or fmap.shape[-3] < 1:
        raise ValueError("expected a C x H x W map with C >= 1")
    return fmap.mean(axis=-3)


def _windows(squeezed: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    pad = [(0, 0)] * (squeezed.ndim - 1) + [(half, half)]
    padded = np.pad(squeezed, pad)
    return np.lib.stride_tricks.sliding_window_view(padded, window, axis=-1)


def kernel_forward(squeezed, params: FefaParams) -> np.ndarray:
    """Affine scoring of the squeezed bins (vector or ``N x bins``)."""
    s = np.asarray(squeezed, dtype=np.float64)
    if s.shape[-1] != params.bins:
        raise ValueError(
            f"squeezed length {s.shape[-1]} != kernel bins {params.bins}")
    if params.connectivity == "full":
        return s @ params.weights.T + params.bias
    # padded taps read zeros, so missing edge taps contribute nothing
    return np.einsum("ik,...ik->...i", params.weights,
                     _windows(s, params.window)) + params.bias


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if np.any(np.isnan(z)):
        raise ValueError("softmax input contains NaN")
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _scale(scale_mode: str, bins: int) -> float:
    if scale_mode == "preserve":
        return float(bins)
    if scale_mode == "literal":
        return 1.0
    raise ValueError(f"unknown scale mode {scale_mode!r}")


def apply_attention(spec, p, scale_mode: str = "preserve") -> np.ndarray:
    """``out[i, t] = c * p[i] * spec[i, t]`` with ``c = bins`` or ``1``."""
    spec = np.asarray(spec, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if spec.shape[0] != p.shape[0]:
        raise ValueError("attention weights do not match the bin count")
    return _scale(scale_mode, p.shape[0]) * p[:, None] * spec


def _as_batch(x: np.ndarray) -> np.ndarray:
    if x.ndim == 2:
        return x[None, None]
    if x.ndim == 3:
        return x[None]
    if x.ndim == 4:
        return x
    raise ValueError("expected a bins x frames matrix or a C x H x W tensor")


def fefa_forward(x, params: FefaParams, scale_mode: str = "preserve"):
    """Enhance ``x`` with FEFA.

    ``x`` may be a ``bins x frames`` spectrogram, a ``C x H x W`` feature map
    or an ``N x C x H x W`` batch (each item gets its own attention).
    Returns ``(out, cache)`` with ``out.shape == x.shape``.
    """
    x = np.asarray(x, dtype=np.float64)
    xb = _as_batch(x)
    n, c, h, w = xb.shape
    if h != params.bins:
        raise ValueError(f"input has {h} bins, FEFA placement expects {params.bins}")
    if w < 1 or c < 1:
        raise ValueError("empty input")
    squeezed = xb.mean(axis=(1, 3))
    logits = kernel_forward(squeezed, params)
    p = softmax(logits)
    scale = _scale(scale_mode, h)
    out = (scale * p)[:, None, :, None] * xb
    cache = FefaCache(xb, squeezed, logits, p, scale, x.shape)
    return out.reshape(x.shape), cache


def fefa_backward(grad_out, cache: FefaCache, params: FefaParams):
    """Gradients of ``sum(grad_out * out)`` w.r.t. input, weights and bias."""
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.in_shape:
        raise ValueError("upstream gradient does not match the cached forward")
    g = _as_batch(g)
    xb, p, scale = cache.x, cache.p, cache.scale
    n, c, h, w = xb.shape
    if params.bins != h:
        raise ValueError("params do not match the cached forward")

    grad_p = scale * np.einsum("nchw,nchw->nh", g, xb)
    grad_logits = p * (grad_p - np.sum(p * grad_p, axis=1, keepdims=True))
    grad_bias = grad_logits.sum(axis=0)
    if params.connectivity == "full":
        grad_weights = grad_logits.T @ cache.squeezed
        grad_squeezed = grad_logits @ params.weights
    else:
        win = params.window
        half = win // 2
        grad_weights = np.einsum("ni,nik->ik", grad_logits,
                                 _windows(cache.squeezed, win))
        padded = np.zeros((n, h + 2 * half))
        for k in range(win):
            padded[:, k:k + h] += grad_logits * params.weights[:, k]
        grad_squeezed = padded[:, half:half + h]

    grad_x = (scale * p)[:, None, :, None] * g
    grad_x = grad_x + grad_squeezed[:, None, :, None] / (c * w)
    return grad_x.reshape(cache.in_shape), grad_weights, grad_bias


def baseline_soft_attention(params: BaselineAttnParams, query) -> np.ndarray:
    """Generic key/value soft attention: expected value under softmax scores."""
    keys = np.atleast_2d(np.asarray(params.keys, dtype=np.float64))
    values = np.asarray(params.values, dtype=np.float64)
    if keys.shape[0] == 0:
        raise ValueError("attention memory is empty")
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != keys.shape[0]:
        raise ValueError("keys and values differ in length")
    projected = np.asarray(params.w_key, dtype=np.float64) @ np.asarray(query, dtype=np.float64)
    p = softmax(keys @ projected)
    return p @ values


def param_count(params: FefaParams) -> int:
    return int(params.tap_mask().sum()) + params.bins


def mac_breakdown(params: FefaParams, input_shape) -> dict:
    """Multiply-accumulate counts of one forward pass, by stage.

    ``input_shape`` is ``(bins, frames)`` or ``(C, H, W)``; ``frames`` may be 0
    to isolate the frame-independent terms.
    """
    if len(input_shape) == 2:
        c, (h, w) = 1, input_shape
    else:
        c, h, w = input_shape
    if h != params.bins:
        raise ValueError("input bins do not match the placement")
    return {
        "squeeze_channels": c * h * w if c > 1 else 0,
        "squeeze_time": h * w,
        "kernel": int(params.tap_mask().sum()),
        "softmax": 2 * h,
        "apply": c * h * w,
    }


def count_macs(params: FefaParams, input_shape) -> int:
    return sum(mac_breakdown(params, input_shape).values())
