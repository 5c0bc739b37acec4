"""Verification trials, cosine scoring and equal error rate."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class TrialSet:
    """Pairs of corpus indices with a same-speaker flag."""

    a: np.ndarray
    b: np.ndarray
    same: np.ndarray

    def __post_init__(self):
        if len(self.a) == 0:
            raise ValueError("trial set is empty")
        if self.same.all() or not self.same.any():
            raise ValueError("trial set needs both target and non-target pairs")

    def __len__(self):
        return len(self.a)


def _sample_pairs(pairs, k, rng):
    if k <= len(pairs):
        pick = rng.choice(len(pairs), size=k, replace=False)
    else:
        # pool too small: use everything once, then top up with repeats
        extra = rng.choice(len(pairs), size=k - len(pairs), replace=True)
        pick = np.concatenate([rng.permutation(len(pairs)), extra])
    return [pairs[i] for i in np.sort(pick)]


def build_trials(indices, labels, n_trials: int, seed: int = 0) -> TrialSet:
    """Half same-speaker, half different-speaker pairs drawn from ``indices``.

    ``labels`` is indexed by corpus index.  Pairs are unique whenever the
    pool of candidate pairs is large enough.
    """
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    if n_trials < 2 or n_trials % 2:
        raise ValueError("n_trials must be an even number >= 2")
    if len(np.unique(labels[indices])) < 2:
        raise ValueError("need at least two speakers")
    same, diff = [], []
    for i, j in itertools.combinations(indices.tolist(), 2):
        (same if labels[i] == labels[j] else diff).append((i, j))
    if not same:
        raise ValueError("not enough utterances per speaker for target trials")
    rng = np.random.default_rng(seed)
    chosen = _sample_pairs(same, n_trials // 2, rng) + _sample_pairs(diff, n_trials // 2, rng)
    a, b = np.array(chosen).T
    flags = np.array([True] * (n_trials // 2) + [False] * (n_trials // 2))
    return TrialSet(a, b, flags)


def l2_normalize(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(x, axis=axis, keepdims=True)
    return x / np.where(norm > 0, norm, 1.0)


def cosine_scores(embeddings: dict | np.ndarray, trials: TrialSet) -> np.ndarray:
    """Cosine similarity of each trial pair; ``embeddings`` maps index -> vector."""
    ea = l2_normalize(np.stack([embeddings[i] for i in trials.a]))
    eb = l2_normalize(np.stack([embeddings[i] for i in trials.b]))
    return np.sum(ea * eb, axis=1)


def error_counts(scores, labels):
    """False accepts and false rejects at every candidate threshold.

    Thresholds are ``-inf``, the midpoints between adjacent distinct scores
    and ``+inf``; a trial is accepted when its score is above the threshold.
    Returns ``(thresholds, fa, fr, n_neg, n_pos)`` with integer counts.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("EER needs both target and non-target trials")
    distinct = np.unique(scores)
    thresholds = np.concatenate([[-np.inf], (distinct[:-1] + distinct[1:]) / 2, [np.inf]])
    # scores at or below threshold k are rejected; k-th threshold sits just above distinct[k-1]
    pos_sorted = np.sort(scores[labels])
    neg_sorted = np.sort(scores[~labels])
    cut = np.concatenate([[-np.inf], distinct])
    fr = np.searchsorted(pos_sorted, cut, side="right")
    fa = n_neg - np.searchsorted(neg_sorted, cut, side="right")
    return thresholds, fa, fr, n_neg, n_pos


def eer_from_counts(fa, fr, n_neg, n_pos) -> float:
    """Equal error rate from monotone error-count sequences.

    Returns the common rate where FAR equals FRR, or linearly interpolates
    between the two thresholds where FAR - FRR changes sign.
    """
    # compare FAR - FRR exactly: fa/n_neg - fr/n_pos ~ fa*n_pos - fr*n_neg
    diff = np.asarray(fa, dtype=np.int64) * n_pos - np.asarray(fr, dtype=np.int64) * n_neg
    zero = np.flatnonzero(diff == 0)
    if zero.size:
        return float(Fraction(int(fa[zero[0]]), n_neg))
    k = int(np.flatnonzero(diff < 0)[0]) - 1
    far0, far1 = Fraction(int(fa[k]), n_neg), Fraction(int(fa[k + 1]), n_neg)
    frr0, frr1 = Fraction(int(fr[k]), n_pos), Fraction(int(fr[k + 1]), n_pos)
    d0, d1 = far0 - frr0, far1 - frr1
    lam = d0 / (d0 - d1)
    return float(far0 + lam * (far1 - far0))


def compute_eer(scores, labels) -> float:
    """Equal error rate (a fraction in [0, 1]); higher score means same speaker."""
    _, fa, fr, n_neg, n_pos = error_counts(scores, labels)
    return eer_from_counts(fa, fr, n_neg, n_pos)
