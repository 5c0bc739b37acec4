"""Feature extraction, the training loop, embeddings and evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from fefakit.checkpoint import Checkpoint, hash_config
from fefakit.dsp import SpectrogramConfig, Waveform, spectrogram
from fefakit.exp.corpus import Corpus, SyntheticCorpusSpec
from fefakit.exp.metrics import TrialSet, compute_eer, cosine_scores, l2_normalize
from fefakit.nn import (
    AdamState, CyclicalLrSchedule, Model, ModelSpec, adam_step, build_model, cyclical_lr,
    softmax_cross_entropy,
)

log = logging.getLogger(__name__)

INPUT_TRANSFORMS = ("log1p", "none")


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 4
    batch_size: int = 32
    base_lr: float = 1e-4
    max_lr: float = 3e-3
    step_size: int = 80
    seed: int = 0
    input_transform: str = "log1p"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.input_transform not in INPUT_TRANSFORMS:
            raise ValueError(f"unknown input transform {self.input_transform!r}")
        self.schedule()  # validates the learning-rate fields

    def schedule(self) -> CyclicalLrSchedule:
        return CyclicalLrSchedule(self.base_lr, self.max_lr, self.step_size)


def run_hash(model_spec: ModelSpec, train_cfg: TrainConfig, spec_cfg: SpectrogramConfig,
             corpus_spec: SyntheticCorpusSpec) -> str:
    """Hash of everything that determines a trained checkpoint."""
    return hash_config(_run_meta(model_spec, train_cfg, spec_cfg, corpus_spec))


def _run_meta(model_spec, train_cfg, spec_cfg, corpus_spec):
    return {"model": model_spec.to_dict(), "train": asdict(train_cfg),
            "spectrogram": asdict(spec_cfg), "corpus": corpus_spec.to_dict()}


def featurize(wave: Waveform, spec_cfg: SpectrogramConfig, transform: str = "log1p") -> np.ndarray:
    """Network input for one waveform: a ``bins x frames`` matrix."""
    values = spectrogram(wave, spec_cfg).values
    return np.log1p(values) if transform == "log1p" else values


def featurize_many(waves, spec_cfg, transform="log1p") -> np.ndarray:
    """``N x 1 x bins x frames`` batch; all waves must have equal length."""
    return np.stack([featurize(w, spec_cfg, transform) for w in waves])[:, None]


def _batches(n, batch_size):
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def predict_logits(model: Model, x, batch_size=64) -> np.ndarray:
    return np.concatenate([model.forward(x[sl]) for sl in _batches(len(x), batch_size)])


def embed_batch(model: Model, x, batch_size=64) -> np.ndarray:
    """L2-normalised penultimate-layer embeddings."""
    raw = np.concatenate([model.embed(x[sl]) for sl in _batches(len(x), batch_size)])
    return l2_normalize(raw)


def _accuracy(model, x, y):
    return float(np.mean(predict_logits(model, x).argmax(axis=1) == y))


def _mean_loss(model, x, y, batch_size=64):
    total = 0.0
    for sl in _batches(len(x), batch_size):
        loss, _ = softmax_cross_entropy(model.forward(x[sl]), y[sl])
        total += loss * (sl.stop - sl.start)
    return total / len(x)


def make_checkpoint(model: Model, train_cfg: TrainConfig, spec_cfg: SpectrogramConfig,
                    corpus_spec: SyntheticCorpusSpec) -> Checkpoint:
    meta = _run_meta(model.spec, train_cfg, spec_cfg, corpus_spec)
    tensors = {k: v.copy() for k, v in model.parameters().items()}
    return Checkpoint(tensors, hash_config(meta), meta)


def model_from_checkpoint(ckpt: Checkpoint) -> Model:
    model = build_model(ModelSpec(**ckpt.meta["model"]))
    model.load_parameters(ckpt.tensors)
    return model


def checkpoint_configs(ckpt: Checkpoint):
    """``(model_spec, train_cfg, spectrogram_cfg)`` stored in a checkpoint."""
    return (ModelSpec(**ckpt.meta["model"]), TrainConfig(**ckpt.meta["train"]),
            SpectrogramConfig(**ckpt.meta["spectrogram"]))


def train(model_spec: ModelSpec, corpus: Corpus, train_cfg: TrainConfig,
          spec_cfg: SpectrogramConfig | None = None, features=None):
    """Train a speaker classifier on ``corpus``.

    ``features`` may carry a precomputed ``N x 1 x bins x frames`` array for
    the whole corpus.  Returns ``(checkpoint, log_rows)`` where the log has
    one row per epoch (row 0 is the untrained model).
    """
    spec_cfg = spec_cfg or SpectrogramConfig()
    if len(corpus.train_idx) == 0:
        raise ValueError("corpus has no training utterances")
    if features is None:
        features = featurize_many(corpus.waves, spec_cfg, train_cfg.input_transform)
    if features.shape[2] != model_spec.input_bins:
        raise ValueError(f"features have {features.shape[2]} bins, model expects "
                         f"{model_spec.input_bins}")
    x_train, y_train = features[corpus.train_idx], corpus.labels[corpus.train_idx]
    x_test, y_test = features[corpus.test_idx], corpus.labels[corpus.test_idx]

    model = build_model(model_spec)
    sched = train_cfg.schedule()
    state = AdamState()
    rng = np.random.default_rng([train_cfg.seed, 7])
    test_acc = _accuracy(model, x_test, y_test) if len(x_test) else math.nan
    rows = [{"epoch": 0, "lr": cyclical_lr(0, sched),
             "train_loss": _mean_loss(model, x_train, y_train),
             "train_acc": _accuracy(model, x_train, y_train), "test_acc": test_acc}]
    it = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(x_train))
        loss_sum, correct = 0.0, 0
        lr = cyclical_lr(it, sched)
        for sl in _batches(len(order), train_cfg.batch_size):
            idx = order[sl]
            logits = model.forward(x_train[idx])
            loss, grad = softmax_cross_entropy(logits, y_train[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, iteration {it} (lr={lr:.3g})")
            model.backward(grad)
            lr = cyclical_lr(it, sched)
            adam_step(model.parameters(), model.gradients(), state, lr)
            it += 1
            loss_sum += loss * len(idx)
            correct += int(np.sum(logits.argmax(axis=1) == y_train[idx]))
        test_acc = _accuracy(model, x_test, y_test) if len(x_test) else math.nan
        rows.append({"epoch": epoch, "lr": lr, "train_loss": loss_sum / len(order),
                     "train_acc": correct / len(order), "test_acc": test_acc})
        log.info("epoch %d loss %.4f train_acc %.3f test_acc %.3f", epoch,
                 rows[-1]["train_loss"], rows[-1]["train_acc"], test_acc)
    return make_checkpoint(model, train_cfg, spec_cfg, corpus.spec), rows


def embed(ckpt_or_model, wave: Waveform) -> np.ndarray:
    """L2-normalised embedding of one waveform."""
    model = ckpt_or_model if isinstance(ckpt_or_model, Model) else model_from_checkpoint(ckpt_or_model)
    spec_cfg, transform = _feature_settings(ckpt_or_model)
    x = featurize(wave, spec_cfg, transform)[None, None]
    return embed_batch(model, x)[0]


def _feature_settings(ckpt_or_model):
    if isinstance(ckpt_or_model, Checkpoint):
        return (SpectrogramConfig(**ckpt_or_model.meta["spectrogram"]),
                ckpt_or_model.meta["train"]["input_transform"])
    return SpectrogramConfig(), "log1p"


def evaluate(ckpt: Checkpoint, corpus: Corpus, trials: TrialSet, test_features=None,
             model: Model | None = None):
    """Top-1 accuracy (%) on the test split and trial EER (%).

    ``test_features`` optionally replaces the clean test-split inputs (used
    by the noise sweep); rows follow ``corpus.test_idx``.
    """
    model = model or model_from_checkpoint(ckpt)
    if test_features is None:
        spec_cfg, transform = _feature_settings(ckpt)
        test_features = featurize_many([corpus.waves[i] for i in corpus.test_idx],
                                       spec_cfg, transform)
    y = corpus.labels[corpus.test_idx]
    acc = _accuracy(model, test_features, y)
    emb = embed_batch(model, test_features)
    lookup = {int(c): emb[r] for r, c in enumerate(corpus.test_idx)}
    eer = compute_eer(cosine_scores(lookup, trials), trials.same)
    return 100.0 * acc, 100.0 * eer
