"""Central finite-difference checks for every hand-written backward pass.

The error of an analytic gradient ``a`` against the numeric estimate ``n``
is ``max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)`` with
``floor = 1e-4 * max(max_j |n_j|, 1e-4)``: entries that are tiny compared with the
largest gradient entry are judged on an absolute scale, because central
differences cannot resolve them to a relative 1e-5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fefakit import fefa as F
from fefakit.nn import functional as fn
from fefakit.nn.models import ModelSpec, build_model

EPS = 1e-5
LAYER_TOL = 1e-5
MODEL_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float
    instances: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tolerance)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name:<32} max rel err {self.max_rel_error:.2e} "
                f"(tol {self.tolerance:.0e}, {self.instances} instances)")


def numerical_gradient(f, x, eps=EPS, indices=None):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in (range(flat.size) if indices is None else indices):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic, numeric, indices=None) -> float:
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if indices is not None:
        a, n = a[indices], n[indices]
    if a.size == 0:
        return 0.0
    floor = 1e-4 * max(float(np.max(np.abs(n))), 1e-4)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def _away_from_zero(rng, shape, margin=1e-2):
    x = rng.standard_normal(shape)
    x[np.abs(x) < margin] += 2 * margin
    return x


def _check_fn(forward, inputs, rng):
    """Compare all gradients of ``sum(g * forward(*inputs))``.

    ``forward`` returns ``(out, backward)`` where ``backward(g)`` yields one
    gradient per input.
    """
    out, backward = forward(*inputs)
    g = rng.standard_normal(out.shape)
    grads = backward(g)
    worst = 0.0
    for x, ga in zip(inputs, grads):
        num = numerical_gradient(lambda: float(np.sum(g * forward(*inputs)[0])), x)
        worst = max(worst, relative_error(ga, num))
    return worst


def _rand_shape(rng, c_max=3):
    return (int(rng.integers(1, 3)), int(rng.integers(1, c_max + 1)),
            int(rng.integers(3, 8)), int(rng.integers(3, 8)))


def check_conv2d(rng):
    n, cin, h, w = _rand_shape(rng)
    cout = int(rng.integers(1, 4))
    k = int(rng.choice([1, 3]))
    stride = int(rng.choice([1, 2]))
    x = rng.standard_normal((n, cin, h, w))
    wt = rng.standard_normal((cout, cin, k, k))
    b = rng.standard_normal(cout)

    def forward(x, wt, b):
        out, cache = fn.conv2d_forward(x, wt, b, stride)
        return out, lambda g: fn.conv2d_backward(g, cache)
    return _check_fn(forward, [x, wt, b], rng)


def check_dense(rng):
    n, din, dout = (int(v) for v in rng.integers(1, 6, size=3))
    x, wt, b = rng.standard_normal((n, din)), rng.standard_normal((dout, din)), rng.standard_normal(dout)

    def forward(x, wt, b):
        out, cache = fn.dense_forward(x, wt, b)
        return out, lambda g: fn.dense_backward(g, cache, wt)
    return _check_fn(forward, [x, wt, b], rng)


def check_relu(rng):
    x = _away_from_zero(rng, _rand_shape(rng))

    def forward(x):
        out, mask = fn.relu_forward(x)
        return out, lambda g: (fn.relu_backward(g, mask),)
    return _check_fn(forward, [x], rng)


def check_maxpool(rng):
    shape = _rand_shape(rng)
    # distinct values spaced well beyond eps so no window has a near-tie
    x = rng.permutation(np.prod(shape)).reshape(shape) * 1e-2 + rng.uniform(-1e-3, 1e-3, shape)

    def forward(x):
        out, cache = fn.maxpool2x2_forward(x)
        return out, lambda g: (fn.maxpool2x2_backward(g, cache),)
    return _check_fn(forward, [x], rng)


def check_gap(rng):
    x = rng.standard_normal(_rand_shape(rng))

    def forward(x):
        out, shape = fn.global_avg_pool_forward(x)
        return out, lambda g: (fn.global_avg_pool_backward(g, shape),)
    return _check_fn(forward, [x], rng)


def check_residual_add(rng):
    shape = _rand_shape(rng)
    a, b = rng.standard_normal(shape), rng.standard_normal(shape)

    def forward(a, b):
        out, cache = fn.residual_add_forward(a, b)
        return out, lambda g: fn.residual_add_backward(g, cache)
    return _check_fn(forward, [a, b], rng)


def check_se(rng):
    n, _, h, w = _rand_shape(rng)
    r = int(rng.choice([1, 2, 4]))
    c = r * int(rng.integers(1, 3))
    x = rng.standard_normal((n, c, h, w))
    w1 = rng.standard_normal((c // r, c))
    w2 = rng.standard_normal((c, c // r))

    def forward(x, w1, w2):
        out, cache = fn.se_forward(x, w1, w2)
        return out, lambda g: fn.se_backward(g, cache, w1, w2)
    return _check_fn(forward, [x, w1, w2], rng)


def check_softmax_ce(rng):
    n, k = int(rng.integers(1, 6)), int(rng.integers(2, 6))
    logits = rng.standard_normal((n, k)) * 2
    labels = rng.integers(0, k, n)
    _, grad = fn.softmax_cross_entropy(logits, labels)
    num = numerical_gradient(lambda: fn.softmax_cross_entropy(logits, labels)[0], logits)
    return relative_error(grad, num)


def _random_fefa(rng, bins, connectivity):
    window = int(rng.choice([1, 3, 5])) if connectivity == "local" else None
    if window is not None:
        window = min(window, bins if bins % 2 else bins - 1)
    params = F.FefaParams.zeros(bins, connectivity, window)
    params.weights[...] = rng.standard_normal(params.weights.shape) * params.tap_mask()
    params.bias[...] = rng.standard_normal(bins)
    return params


def check_fefa(rng, connectivity="full", scale_mode="preserve", tensor=False):
    if tensor:
        shape = (int(rng.integers(1, 3)), int(rng.integers(1, 4)),
                 int(rng.integers(2, 9)), int(rng.integers(1, 6)))
    else:
        shape = (int(rng.integers(2, 9)), int(rng.integers(1, 6)))
    bins = shape[-2]
    params = _random_fefa(rng, bins, connectivity)
    x = rng.standard_normal(shape)

    def forward(x, weights, bias):
        out, cache = F.fefa_forward(x, params, scale_mode)
        return out, lambda g: F.fefa_backward(g, cache, params)
    return _check_fn(forward, [x, params.weights, params.bias], rng)


def _model_instance(rng, backbone, fefa_mode, connectivity):
    spec = ModelSpec(backbone=backbone, fefa=fefa_mode, connectivity=connectivity,
                     local_window=3, n_classes=3, embedding_dim=6, input_bins=16,
                     seed=int(rng.integers(1 << 30)))
    model = build_model(spec)
    for layer in model.fefa_layers():
        layer.fefa.weights[...] = 0.3 * rng.standard_normal(layer.fefa.weights.shape) * layer._mask
        layer.fefa.bias[...] = 0.3 * rng.standard_normal(layer.fefa.bias.shape)
    x = np.abs(rng.standard_normal((2, 1, 16, 8)))
    y = rng.integers(0, 3, 2)
    return model, x, y


def check_model(rng, backbone, fefa_mode, connectivity="full", n_probe=8, max_draws=5):
    """End-to-end loss gradient of a small model on a 2-sample batch.

    Probes ``n_probe`` random entries of every parameter tensor.  FEFA
    weights are randomised so the attention path is exercised.  An instance
    whose difference quotients at ``EPS`` and ``EPS / 2`` disagree sits on a
    ReLU/max-pool kink and is redrawn (at most ``max_draws`` times).
    """
    for _ in range(max_draws):
        model, x, y = _model_instance(rng, backbone, fefa_mode, connectivity)

        def loss():
            return fn.softmax_cross_entropy(model.forward(x), y)[0]

        _, grad = fn.softmax_cross_entropy(model.forward(x), y)
        model.backward(grad)
        analytic = {k: v.copy() for k, v in model.gradients().items()}
        worst, smooth = 0.0, True
        for name, param in model.parameters().items():
            idx = rng.choice(param.size, size=min(n_probe, param.size), replace=False)
            num = numerical_gradient(loss, param, indices=idx)
            half = numerical_gradient(loss, param, eps=EPS / 2, indices=idx)
            if relative_error(half, num, indices=idx) > MODEL_TOL:
                smooth = False
                break
            worst = max(worst, relative_error(analytic[name], num, indices=idx))
        if smooth:
            return worst
    raise RuntimeError(f"no kink-free instance for {backbone}/{fefa_mode} in {max_draws} draws")


LAYER_CHECKS = {
    "conv2d": check_conv2d,
    "dense": check_dense,
    "relu": check_relu,
    "maxpool2x2": check_maxpool,
    "global_avg_pool": check_gap,
    "residual_add": check_residual_add,
    "se_block": check_se,
    "softmax_cross_entropy": check_softmax_ce,
    "fefa[full,preserve,matrix]": lambda r: check_fefa(r, "full", "preserve", False),
    "fefa[full,literal,tensor]": lambda r: check_fefa(r, "full", "literal", True),
    "fefa[local,preserve,tensor]": lambda r: check_fefa(r, "local", "preserve", True),
    "fefa[local,literal,matrix]": lambda r: check_fefa(r, "local", "literal", False),
}

MODEL_CASES = [(bb, mode) for bb in ("vgg_m", "resnet_m", "seresnet_m")
               for mode in ("none", "single", "multi")]


def run_suite(instances=10, model_instances=1, seed=0, include_models=True):
    """Run every check; returns a list of :class:`CheckResult`."""
    results = []
    for name, check in LAYER_CHECKS.items():
        rng = np.random.default_rng([seed, len(results)])
        worst = max(check(rng) for _ in range(instances))
        results.append(CheckResult(name, worst, LAYER_TOL, instances))
    if include_models:
        for backbone, mode in MODEL_CASES:
            rng = np.random.default_rng([seed, len(results)])
            worst = max(check_model(rng, backbone, mode) for _ in range(model_instances))
            results.append(CheckResult(f"model[{backbone},{mode}]", worst, MODEL_TOL,
                                       model_instances))
    return results
