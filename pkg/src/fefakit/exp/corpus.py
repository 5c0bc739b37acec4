"""Synthetic harmonic "speakers".

Each speaker is a fundamental frequency plus a fixed amplitude profile over
its first few harmonics, so speaker identity lives in a handful of
spectrogram bins.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from fefakit.dsp import Waveform, add_noise


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_speakers: int = 8
    utterances_per_speaker: int = 200
    duration_s: float = 1.0
    sample_rate_hz: int = 16000
    harmonics_per_speaker: int = 4
    f0_range_hz: tuple = (120.0, 320.0)
    jitter_pct: float = 3.0
    utterance_noise_snr_db: float = 30.0
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "f0_range_hz", tuple(float(f) for f in self.f0_range_hz))
        lo, hi = self.f0_range_hz
        if self.n_speakers < 1 or self.utterances_per_speaker < 1:
            raise ValueError("speaker and utterance counts must be >= 1")
        if self.harmonics_per_speaker < 1:
            raise ValueError("harmonics_per_speaker must be >= 1")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("duration and sample rate must be positive")
        if not 0 < lo <= hi < self.sample_rate_hz / 2:
            raise ValueError("f0 range must lie inside (0, Nyquist)")
        if self.jitter_pct < 0:
            raise ValueError("jitter_pct must be >= 0")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")

    def check_nyquist(self):
        """Raise if the highest jittered harmonic can reach Nyquist."""
        nyquist = self.sample_rate_hz / 2
        top = self.f0_range_hz[1] * (1 + self.jitter_pct / 100.0) * self.harmonics_per_speaker
        if top >= nyquist:
            raise ValueError(f"highest harmonic ({top:.1f} Hz) reaches Nyquist ({nyquist:.1f} Hz)")

    def to_dict(self):
        d = asdict(self)
        d["f0_range_hz"] = list(self.f0_range_hz)
        return d


@dataclass
class Corpus:
    spec: SyntheticCorpusSpec
    waves: list
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    speaker_f0: np.ndarray
    speaker_amps: np.ndarray

    def __len__(self):
        return len(self.waves)

    @property
    def n_speakers(self):
        return self.spec.n_speakers


def _speaker_voices(spec, rng):
    lo, hi = spec.f0_range_hz
    n = spec.n_speakers
    # one f0 per equal-width stratum, strata assigned in random order
    strata = rng.permutation(n)
    offsets = rng.uniform(0.25, 0.75, n)
    f0 = lo + (strata + offsets) * (hi - lo) / n
    amps = rng.uniform(0.3, 1.0, size=(n, spec.harmonics_per_speaker))
    return f0, amps


def synthesize_utterance(f0, amps, spec, rng):
    """One utterance: jittered harmonics, random phases, slow envelope, RMS 0.1."""
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    t = np.arange(n) / spec.sample_rate_hz
    jitter = spec.jitter_pct / 100.0
    f0_utt = f0 * (1.0 + rng.uniform(-jitter, jitter))
    phases = rng.uniform(0.0, 2.0 * np.pi, len(amps))
    k = np.arange(1, len(amps) + 1)
    x = (amps[:, None] * np.sin(2.0 * np.pi * f0_utt * k[:, None] * t + phases[:, None])).sum(0)
    mod_hz = rng.uniform(1.0, 4.0)
    mod_phase = rng.uniform(0.0, 2.0 * np.pi)
    env = 1.0 + 0.3 * np.sin(2.0 * np.pi * mod_hz * t + mod_phase)
    ramp = min(n // 2, int(0.02 * spec.sample_rate_hz))
    if ramp > 0:
        fade = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
        env[:ramp] *= fade
        env[n - ramp:] *= fade[::-1]
    x *= env
    rms = math.sqrt(float(np.mean(x ** 2)))
    return x * (0.1 / rms)


def generate_corpus(spec: SyntheticCorpusSpec) -> Corpus:
    """Deterministic labelled corpus with a per-speaker train/test split."""
    spec.check_nyquist()
    rng = np.random.default_rng([spec.seed, 0])
    f0, amps = _speaker_voices(spec, rng)

    waves, labels, train_idx, test_idx = [], [], [], []
    n_train = int(round(spec.train_fraction * spec.utterances_per_speaker))
    for s in range(spec.n_speakers):
        order = np.random.default_rng([spec.seed, 1, s]).permutation(spec.utterances_per_speaker)
        is_train = np.zeros(spec.utterances_per_speaker, dtype=bool)
        is_train[order[:n_train]] = True
        for u in range(spec.utterances_per_speaker):
            utt_rng = np.random.default_rng([spec.seed, 2, s, u])
            x = synthesize_utterance(f0[s], amps[s], spec, utt_rng)
            wave = Waveform(x, spec.sample_rate_hz)
            if math.isfinite(spec.utterance_noise_snr_db):
                noise_seed = int(utt_rng.integers(2 ** 32))
                wave = add_noise(wave, spec.utterance_noise_snr_db, "gaussian", noise_seed)
            (train_idx if is_train[u] else test_idx).append(len(waves))
            waves.append(wave)
            labels.append(s)
    return Corpus(spec, waves, np.array(labels), np.array(train_idx), np.array(test_idx),
                  f0, amps)


def harmonic_bins(corpus: Corpus, speaker: int, fft_size: int = 512) -> np.ndarray:
    """Nearest spectrogram bin of each of the speaker's nominal harmonics."""
    k = np.arange(1, corpus.spec.harmonics_per_speaker + 1)
    freqs = corpus.speaker_f0[speaker] * k
    return np.rint(freqs * fft_size / corpus.spec.sample_rate_hz).astype(int)
