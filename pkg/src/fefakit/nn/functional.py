"""Stateless forward/backward pairs on ``N x C x H x W`` float64 arrays.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache.
"""

from __future__ import annotations

import numpy as np


def _check_4d(x, name="input"):
    if x.ndim != 4:
        raise ValueError(f"{name} must be N x C x H x W, got shape {x.shape}")


def conv2d_forward(x, weight, bias, stride=1):
    """Zero-padded ``k x k`` cross-correlation (``k`` odd, padding ``k//2``).

    Output spatial size is ``ceil(H / stride) x ceil(W / stride)``.
    """
    _check_4d(x)
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ValueError(f"kernel expects {wcin} input channels, got {cin}")
    if kh != kw or kh % 2 == 0:
        raise ValueError("kernel must be square with odd size")
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    pad = kh // 2
    ho, wo = -(-h // stride), -(-w // stride)
    # channel-major columns: (Cin, kh, kw, N, Ho, Wo)
    xc = np.zeros((cin, n, h + 2 * pad, w + 2 * pad))
    xc[:, :, pad:pad + h, pad:pad + w] = x.transpose(1, 0, 2, 3)
    cols = np.empty((cin, kh, kw, n, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xc[:, :, i:i + (ho - 1) * stride + 1:stride,
                               j:j + (wo - 1) * stride + 1:stride]
    cols = cols.reshape(cin * kh * kw, -1)
    out = weight.reshape(cout, -1) @ cols + bias[:, None]
    out = out.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out), (x.shape, cols, weight, stride)


def conv2d_backward(dout, cache, need_input_grad=True):
    x_shape, cols, weight, stride = cache
    n, cin, h, w = x_shape
    cout, _, kh, kw = weight.shape
    pad = kh // 2
    ho, wo = dout.shape[2], dout.shape[3]
    d2 = np.ascontiguousarray(dout.transpose(1, 0, 2, 3)).reshape(cout, -1)
    dweight = (d2 @ cols.T).reshape(weight.shape)
    dbias = d2.sum(axis=1)
    if not need_input_grad:
        return None, dweight, dbias
    dcols = (weight.reshape(cout, -1).T @ d2).reshape(cin, kh, kw, n, ho, wo)
    dxc = np.zeros((cin, n, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            dxc[:, :, i:i + (ho - 1) * stride + 1:stride,
                j:j + (wo - 1) * stride + 1:stride] += dcols[:, i, j]
    dx = dxc[:, :, pad:pad + h, pad:pad + w].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(dx), dweight, dbias


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(dout, mask):
    return np.where(mask, dout, 0.0)


def maxpool2x2_forward(x):
    """2x2 max pooling, stride 2, trailing odd row/column dropped.

    Ties go to the first maximal element in row-major window order.
    """
    _check_4d(x)
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    if ho < 1 or wo < 1:
        raise ValueError(f"map {h}x{w} too small for 2x2 pooling")
    corners = [x[:, :, di:2 * ho:2, dj:2 * wo:2] for di in (0, 1) for dj in (0, 1)]
    out = np.maximum(np.maximum(corners[0], corners[1]),
                     np.maximum(corners[2], corners[3]))
    # winner index per window, first maximum wins
    idx = np.full(out.shape, 3, dtype=np.int8)
    for k in (2, 1, 0):
        idx[corners[k] == out] = k
    return out, (x.shape, idx)


def maxpool2x2_backward(dout, cache):
    x_shape, idx = cache
    ho, wo = idx.shape[2], idx.shape[3]
    dx = np.zeros(x_shape)
    for k, (di, dj) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        dx[:, :, di:2 * ho:2, dj:2 * wo:2] = np.where(idx == k, dout, 0.0)
    return dx


def global_avg_pool_forward(x):
    _check_4d(x)
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dout, x_shape):
    n, c, h, w = x_shape
    return np.broadcast_to((dout / (h * w))[:, :, None, None], x_shape).copy()


def dense_forward(x, weight, bias):
    """``x @ weight.T + bias`` with ``weight`` shaped ``out x in``."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"dense expects N x {weight.shape[1]}, got {x.shape}")
    return x @ weight.T + bias, x


def dense_backward(dout, x, weight):
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


def residual_add_forward(a, b):
    if a.shape != b.shape:
        raise ValueError(f"residual shapes differ: {a.shape} vs {b.shape}")
    return a + b, None


def residual_add_backward(dout, cache=None):
    return dout, dout


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def se_forward(x, w1, w2):
    """Squeeze-and-excitation gate: ``s = sigmoid(w2 @ relu(w1 @ gap(x)))``."""
    _check_4d(x)
    pooled = x.mean(axis=(2, 3))
    hidden_pre = pooled @ w1.T
    hidden = np.maximum(hidden_pre, 0.0)
    s = sigmoid(hidden @ w2.T)
    return x * s[:, :, None, None], (x, pooled, hidden_pre, hidden, s)


def se_backward(dout, cache, w1, w2):
    x, pooled, hidden_pre, hidden, s = cache
    h, w = x.shape[2], x.shape[3]
    dx = dout * s[:, :, None, None]
    ds = np.einsum("nchw,nchw->nc", dout, x)
    dz2 = ds * s * (1.0 - s)
    dw2 = dz2.T @ hidden
    dhidden = dz2 @ w2
    dz1 = dhidden * (hidden_pre > 0)
    dw1 = dz1.T @ pooled
    dpooled = dz1 @ w1
    dx = dx + (dpooled / (h * w))[:, :, None, None]
    return dx, dw1, dw2


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,) or np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"labels must be {n} integers in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = -float(log_p[np.arange(n), labels].mean())
    grad = np.exp(log_p)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
