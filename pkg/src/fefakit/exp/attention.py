"""Inspecting learned frequency attention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fefakit.checkpoint import Checkpoint
from fefakit.dsp import Waveform
from fefakit.exp.training import _feature_settings, featurize, model_from_checkpoint
from fefakit.nn.layers import FefaLayer


class NoAttentionError(ValueError):
    """The checkpoint has no FEFA placement to inspect."""


@dataclass
class AttentionMap:
    weights: dict            # placement id -> p vector (length = that placement's bins)
    features: np.ndarray     # bins x frames network input
    enhanced: np.ndarray     # input after the input placement (bins x frames)


def attention_heatmap(ckpt: Checkpoint, wave: Waveform) -> AttentionMap:
    """Run one utterance through a FEFA model and collect every placement's p."""
    model = model_from_checkpoint(ckpt)
    if not model.fefa_layers():
        raise NoAttentionError("checkpoint has no FEFA placement")
    spec_cfg, transform = _feature_settings(ckpt)
    feats = featurize(wave, spec_cfg, transform)
    x = feats[None, None]
    weights, enhanced = {}, None
    for _, layer in model.layers:
        x = layer.forward(x)
        if isinstance(layer, FefaLayer):
            weights[layer.placement_id] = layer.last_p[0].copy()
            if layer.placement_id == "input":
                enhanced = x[0, 0].copy()
    return AttentionMap(weights, feats, enhanced)


def top_k_bins(p, k: int) -> np.ndarray:
    """Indices of the ``k`` largest weights, ties broken by lower bin."""
    p = np.asarray(p)
    order = np.lexsort((np.arange(p.size), -p))
    return np.sort(order[:k])


def harmonic_overlap(p, harmonic_bins, k=None) -> float:
    """Fraction of the top-``k`` attended bins within one bin of a harmonic."""
    harmonic_bins = np.asarray(harmonic_bins)
    k = k or len(harmonic_bins)
    top = top_k_bins(p, k)
    near = np.abs(top[:, None] - harmonic_bins[None, :]).min(axis=1) <= 1
    return float(np.mean(near))
