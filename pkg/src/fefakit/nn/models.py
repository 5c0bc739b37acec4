"""Miniature VGG / ResNet / SE-ResNet backbones with optional FEFA placements."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from fefakit import fefa as F
from fefakit.nn.layers import (
    Conv2d, Dense, FefaLayer, GlobalAvgPool, MaxPool2x2, ReLU, ResidualBlock,
)

BACKBONES = ("vgg_m", "resnet_m", "seresnet_m")
FEFA_MODES = ("none", "single", "multi")
STAGE_CHANNELS = (8, 16, 32)


@dataclass(frozen=True)
class ModelSpec:
    backbone: str = "vgg_m"
    fefa: str = "none"
    scale_mode: str = "preserve"
    connectivity: str = "full"
    local_window: int = 9
    n_classes: int = 8
    embedding_dim: int = 32
    input_bins: int = 257
    se_reduction: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.fefa not in FEFA_MODES:
            raise ValueError(f"unknown fefa mode {self.fefa!r}")
        if self.scale_mode not in F.SCALE_MODES:
            raise ValueError(f"unknown scale mode {self.scale_mode!r}")
        if self.connectivity not in F.CONNECTIVITIES:
            raise ValueError(f"unknown connectivity {self.connectivity!r}")
        if self.connectivity == "local" and (self.local_window < 1 or self.local_window % 2 == 0):
            raise ValueError("local_window must be a positive odd integer")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")
        if self.input_bins < 8:
            raise ValueError("input_bins must be >= 8 (three 2x reductions)")

    def to_dict(self):
        return asdict(self)


class Model:
    """Ordered stack of named layers ending in ``embed -> relu -> classifier``."""

    def __init__(self, spec: ModelSpec, layers):
        self.spec = spec
        self.layers = list(layers)
        self.embedding = None

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        for name, layer in self.layers:
            x = layer.forward(x)
            if name == "embed":
                self.embedding = x
        return x

    def backward(self, dlogits, need_input_grad=False):
        """Fill every layer's ``grads``; returns d(loss)/d(input) on request."""
        d = dlogits
        for i in range(len(self.layers) - 1, 0, -1):
            d = self.layers[i][1].backward(d)
        first = self.layers[0][1]
        if isinstance(first, Conv2d):
            return first.backward(d, need_input_grad)
        return first.backward(d)

    def embed(self, x):
        """Penultimate dense output (before its ReLU), not normalised."""
        x = np.asarray(x, dtype=np.float64)
        for name, layer in self.layers:
            x = layer.forward(x)
            if name == "embed":
                return x
        raise RuntimeError("model has no embedding layer")

    def parameters(self):
        out = {}
        for name, layer in self.layers:
            for pname, value in layer.named_params(f"{name}."):
                out[pname] = value
        return out

    def gradients(self):
        out = {}
        for name, layer in self.layers:
            for pname, value in layer.named_grads(f"{name}."):
                out[pname] = value
        return out

    def fefa_layers(self):
        return [layer for _, layer in self.layers if isinstance(layer, FefaLayer)]

    def n_params(self):
        return int(sum(v.size for v in self.parameters().values()))

    def load_parameters(self, tensors):
        """Copy ``tensors`` into the parameters in place (names must match)."""
        params = self.parameters()
        missing = set(params) - set(tensors)
        extra = set(tensors) - set(params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, value in params.items():
            src = np.asarray(tensors[name], dtype=np.float64)
            if src.shape != value.shape:
                raise ValueError(f"{name}: shape {src.shape} != {value.shape}")
            np.copyto(value, src)

    def __repr__(self):
        body = "\n".join(f"  {name}: {layer!r}" for name, layer in self.layers)
        return f"Model({self.spec.backbone}, fefa={self.spec.fefa})\n{body}"


def _head(spec, rng, channels):
    return [
        ("gap", GlobalAvgPool()),
        ("embed", Dense(channels, spec.embedding_dim, rng)),
        ("embed_relu", ReLU()),
        ("classifier", Dense(spec.embedding_dim, spec.n_classes, rng)),
    ]


def _vgg_m(spec, rng):
    layers = []
    cin = 1
    for i, cout in enumerate(STAGE_CHANNELS, start=1):
        layers += [
            (f"conv{i}", Conv2d(cin, cout, 3, 1, rng)),
            (f"relu{i}", ReLU()),
            (f"pool{i}", MaxPool2x2()),
        ]
        cin = cout
    return layers + _head(spec, rng, cin)


def _resnet_m(spec, rng, se):
    reduction = spec.se_reduction if se else None
    layers = [("stem", Conv2d(1, STAGE_CHANNELS[0], 3, 1, rng)), ("stem_relu", ReLU())]
    cin = STAGE_CHANNELS[0]
    for i, cout in enumerate(STAGE_CHANNELS, start=1):
        stride = 1 if i == 1 else 2
        layers.append((f"stage{i}", ResidualBlock(cin, cout, stride, reduction, rng)))
        cin = cout
    return layers + _head(spec, rng, cin)


def build_model(spec: ModelSpec) -> Model:
    """He-uniform initialised backbone from ``spec.seed`` plus its FEFA placements.

    FEFA parameters start at zero and never draw from the generator, so the
    backbone weights are identical with and without FEFA for a given seed.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.backbone == "vgg_m":
        layers = _vgg_m(spec, rng)
    else:
        layers = _resnet_m(spec, rng, se=spec.backbone == "seresnet_m")
    return insert_fefa(Model(spec, layers), spec.fefa)


def _new_fefa_layer(spec, bins, placement_id):
    window = None
    if spec.connectivity == "local":
        window = min(spec.local_window, bins if bins % 2 else bins - 1)
    params = F.FefaParams.zeros(bins, spec.connectivity, window, placement_id)
    return FefaLayer(params, spec.scale_mode)


def insert_fefa(model: Model, mode: str) -> Model:
    """Add FEFA placements in place and return the model.

    ``single`` puts one placement on the input spectrogram.  ``multi`` adds
    a channel-squeezed placement after every layer that reduces the
    frequency axis, each sized to that stage's height.
    """
    if mode not in FEFA_MODES:
        raise ValueError(f"unknown fefa mode {mode!r}")
    if mode == "none":
        return model
    if model.fefa_layers():
        raise ValueError("model already has FEFA placements")
    spec = model.spec
    new_layers = [("fefa_input", _new_fefa_layer(spec, spec.input_bins, "input"))]
    h = spec.input_bins
    for name, layer in model.layers:
        new_layers.append((name, layer))
        h = layer.output_height(h)
        if mode == "multi" and layer.reduces:
            new_layers.append((f"fefa_{name}", _new_fefa_layer(spec, h, name)))
    model.layers = new_layers
    model.spec = replace(spec, fefa=mode)
    return model
