"""Test-time noise sweep over trained checkpoints (clean-trained models only)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from fefakit.dsp import NOISE_KINDS, add_noise
from fefakit.exp.training import (
    checkpoint_configs, evaluate, featurize_many, model_from_checkpoint,
)

DEFAULT_SNRS = (20.0, 50.0, 100.0)
REPORT_HEADER = ["variant", "backbone", "dist", "snr_db", "accuracy_pct", "eer_pct",
                 "delta_eer_pct", "seeds"]


@dataclass
class EvalRow:
    variant: str
    backbone: str
    dist: str          # "clean" for the noise-free reference row
    snr_db: float
    accuracy_pct: float
    eer_pct: float
    delta_eer_pct: float
    seeds: tuple

    def as_csv(self):
        return [self.variant, self.backbone, self.dist, _fmt(self.snr_db),
                _fmt(self.accuracy_pct), _fmt(self.eer_pct), _fmt(self.delta_eer_pct),
                ";".join(str(s) for s in self.seeds)]


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.4f}"
    return str(v)


def delta_eer_pct(eer_clean: float, eer_noisy: float) -> float:
    """Relative EER change in percent; degradation is negative.

    With a clean EER of exactly zero the relative change is undefined: it is
    reported as 0 when the noisy EER is also zero and ``-inf`` otherwise.
    """
    if eer_clean == 0.0:
        return 0.0 if eer_noisy == 0.0 else -math.inf
    return 100.0 * (eer_clean - eer_noisy) / eer_clean


@dataclass
class EvalReport:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in self.rows:
            writer.writerow(row.as_csv())
        return buf.getvalue()

    def lookup(self, variant, dist, snr_db):
        for row in self.rows:
            if row.variant == variant and row.dist == dist and row.snr_db == snr_db:
                return row
        raise KeyError((variant, dist, snr_db))


def variant_name(ckpt) -> str:
    mode = ckpt.meta["model"]["fefa"]
    return "baseline" if mode == "none" else f"fefa_{mode}"


def noise_seed(base_seed, dist, snr_db, corpus_index) -> int:
    ss = np.random.SeedSequence([base_seed, NOISE_KINDS.index(dist),
                                 int(round(snr_db * 1000)), int(corpus_index)])
    return int(ss.generate_state(1)[0])


def noisy_test_features(corpus, spec_cfg, transform, dist, snr_db, base_seed=0):
    """Corrupt every test-split utterance at ``snr_db`` and featurize it."""
    waves = [add_noise(corpus.waves[i], snr_db, dist, noise_seed(base_seed, dist, snr_db, i))
             if math.isfinite(snr_db) else corpus.waves[i]
             for i in corpus.test_idx]
    return featurize_many(waves, spec_cfg, transform)


def robustness_sweep(checkpoints, corpus, trials, snr_list=DEFAULT_SNRS,
                     dists=NOISE_KINDS, noise_base_seed=0) -> EvalReport:
    """Evaluate each checkpoint clean and under every (dist, SNR) condition.

    ``checkpoints`` is a list (one per variant and training seed).  Rows are
    the median over seeds of each variant; the clean row comes first.
    """
    results = {}   # (variant, backbone) -> {(dist, snr): [(acc, eer), ...]}
    seeds = {}
    feature_cache = {}
    conditions = [("clean", math.inf)] + [(d, float(s)) for d in dists for s in snr_list]
    for ckpt in checkpoints:
        _, train_cfg, spec_cfg = checkpoint_configs(ckpt)
        model = model_from_checkpoint(ckpt)
        key = (variant_name(ckpt), ckpt.meta["model"]["backbone"])
        seeds.setdefault(key, []).append(train_cfg.seed)
        per_cond = results.setdefault(key, {})
        for dist, snr in conditions:
            fkey = (dist, snr, spec_cfg, train_cfg.input_transform)
            if fkey not in feature_cache:
                feature_cache[fkey] = noisy_test_features(
                    corpus, spec_cfg, train_cfg.input_transform,
                    NOISE_KINDS[0] if dist == "clean" else dist, snr, noise_base_seed)
            acc, eer = evaluate(ckpt, corpus, trials, feature_cache[fkey], model=model)
            per_cond.setdefault((dist, snr), []).append((acc, eer))

    rows = []
    for (variant, backbone), per_cond in results.items():
        clean = np.array(per_cond[("clean", math.inf)])
        for dist, snr in conditions:
            vals = np.array(per_cond[(dist, snr)])
            # per-seed relative change, then the median across seeds
            deltas = [delta_eer_pct(c, n) for c, n in zip(clean[:, 1], vals[:, 1])]
            rows.append(EvalRow(variant, backbone, dist, snr, float(np.median(vals[:, 0])),
                                float(np.median(vals[:, 1])), float(np.median(deltas)),
                                tuple(seeds[(variant, backbone)])))
    return EvalReport(rows)
