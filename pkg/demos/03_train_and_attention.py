"""
Training a small speaker classifier with frequency attention
============================================================

A reduced synthetic corpus keeps this to about a minute on one CPU.  Each
speaker is a fixed set of harmonics, so the learned attention can be
compared with the speaker's harmonic bins.
"""

import numpy as np

from fefakit.exp.attention import attention_heatmap, harmonic_overlap, top_k_bins
from fefakit.exp.corpus import SyntheticCorpusSpec, generate_corpus, harmonic_bins
from fefakit.exp.metrics import build_trials
from fefakit.exp.training import TrainConfig, evaluate, train
from fefakit.nn import ModelSpec

corpus = generate_corpus(SyntheticCorpusSpec(n_speakers=4, utterances_per_speaker=40,
                                             duration_s=0.5, jitter_pct=0.0, seed=1))
print("utterances:", len(corpus), "train/test:", len(corpus.train_idx), len(corpus.test_idx))
print("speaker f0 (Hz):", np.round(corpus.speaker_f0, 1))

ckpt, log = train(ModelSpec(fefa="single", n_classes=4), corpus,
                  TrainConfig(epochs=3, batch_size=16, step_size=12))
for row in log:
    print(f"epoch {row['epoch']}  loss {row['train_loss']:.3f}  test acc {row['test_acc']:.3f}")

trials = build_trials(corpus.test_idx, corpus.labels, 200, seed=0)
acc, eer = evaluate(ckpt, corpus, trials)
print(f"accuracy {acc:.1f}%  EER {eer:.1f}%")

# Where does the input placement look?
for speaker in range(4):
    utt = int(np.flatnonzero(corpus.labels == speaker)[0])
    p = attention_heatmap(ckpt, corpus.waves[utt]).weights["input"]
    bins = harmonic_bins(corpus, speaker)
    print(f"speaker {speaker}: harmonics at bins {bins.tolist()}, "
          f"top attended {top_k_bins(p, 4).tolist()}, overlap {harmonic_overlap(p, bins):.2f}")
