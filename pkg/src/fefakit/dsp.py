"""Short-time power spectrograms and calibrated additive noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NOISE_KINDS = ("gaussian", "uniform")
WINDOW_KINDS = ("hann",)


class SignalTooShortError(ValueError):
    """Raised when a waveform cannot hold a single analysis window."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def power(self) -> float:
        return float(np.mean(self.samples ** 2))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SpectrogramConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    window_kind: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop_ms <= self.window_ms:
            raise ValueError("need 0 < hop_ms <= window_ms")
        if self.fft_size < 2 or self.fft_size % 2:
            raise ValueError("fft_size must be an even integer >= 2")
        if self.window_kind not in WINDOW_KINDS:
            raise ValueError(f"unknown window kind {self.window_kind!r}")

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_samples(self, sample_rate_hz: int) -> int:
        return _round_half_up(self.window_ms * sample_rate_hz / 1000.0)

    def hop_samples(self, sample_rate_hz: int) -> int:
        return _round_half_up(self.hop_ms * sample_rate_hz / 1000.0)

    def check_rate(self, sample_rate_hz: int) -> None:
        """Validate the sample-rate dependent invariants."""
        win = self.window_samples(sample_rate_hz)
        if win < 2:
            raise ValueError("analysis window shorter than 2 samples")
        if self.hop_samples(sample_rate_hz) < 1:
            raise ValueError("hop shorter than one sample")
        if win > self.fft_size:
            raise ValueError(
                f"fft_size {self.fft_size} smaller than window ({win} samples)")


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray
    bin_center_hz: np.ndarray
    frame_hop_s: float

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


def frame_signal(wave: Waveform, cfg: SpectrogramConfig) -> np.ndarray:
    """Cut ``wave`` into overlapping frames, dropping the trailing remainder.

    Returns a ``frames x window_samples`` array (a copy, safe to modify).
    """
    win = cfg.window_samples(wave.sample_rate_hz)
    hop = cfg.hop_samples(wave.sample_rate_hz)
    n = len(wave)
    if n < win:
        raise SignalTooShortError(
            f"signal has {n} samples, one window needs {win}")
    n_frames = 1 + (n - win) // hop
    view = np.lib.stride_tricks.sliding_window_view(wave.samples, win)
    return np.array(view[: (n_frames - 1) * hop + 1 : hop])


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length ``n``."""
    if n < 2:
        raise ValueError("window length must be >= 2")
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def apply_window(frame, kind: str = "hann") -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if kind not in WINDOW_KINDS:
        raise ValueError(f"unknown window kind {kind!r}")
    return frame * hann_window(frame.shape[-1])


def power_spectrum(windowed_frame, fft_size: int) -> np.ndarray:
    """One-sided ``|X[k]|**2`` for k = 0..fft_size/2, zero-padding the frame.

    Works on a single frame or on a stack of frames along the last axis.
    """
    x = np.asarray(windowed_frame, dtype=np.float64)
    if x.shape[-1] > fft_size:
        raise ValueError(
            f"frame of length {x.shape[-1]} exceeds fft_size {fft_size}")
    spectrum = np.fft.rfft(x, n=fft_size, axis=-1)
    return spectrum.real ** 2 + spectrum.imag ** 2


def spectrogram(wave: Waveform, cfg: SpectrogramConfig | None = None) -> Spectrogram:
    cfg = cfg or SpectrogramConfig()
    cfg.check_rate(wave.sample_rate_hz)
    frames = frame_signal(wave, cfg)
    power = power_spectrum(apply_window(frames, cfg.window_kind), cfg.fft_size)
    values = np.ascontiguousarray(power.T)
    freqs = np.arange(cfg.bins) * (wave.sample_rate_hz / cfg.fft_size)
    hop_s = cfg.hop_samples(wave.sample_rate_hz) / wave.sample_rate_hz
    return Spectrogram(values=values, bin_center_hz=freqs, frame_hop_s=hop_s)


def unit_noise(n: int, dist: str, seed: int) -> np.ndarray:
    """Zero-mean, unit-variance i.i.d. noise from a seeded generator."""
    rng = np.random.default_rng(seed)
    if dist == "gaussian":
        return rng.standard_normal(n)
    if dist == "uniform":
        lim = math.sqrt(3.0)
        return rng.uniform(-lim, lim, n)
    raise ValueError(f"unknown noise distribution {dist!r}")


def add_noise(wave: Waveform, snr_db: float, dist: str = "gaussian",
              seed: int = 0) -> Waveform:
    """Return ``wave`` plus scaled noise whose realised SNR is exactly ``snr_db``.

    ``snr_db = inf`` is the no-noise mode and returns an equal waveform.
    """
    if dist not in NOISE_KINDS:
        raise ValueError(f"unknown noise distribution {dist!r}")
    p_signal = wave.power()
    if p_signal == 0.0:
        raise ValueError("SNR is undefined for a zero-power signal")
    if math.isinf(snr_db) and snr_db > 0:
        return Waveform(wave.samples.copy(), wave.sample_rate_hz)
    noise = unit_noise(len(wave), dist, seed)
    p_noise = float(np.mean(noise ** 2))
    alpha = math.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    return Waveform(wave.samples + alpha * noise, wave.sample_rate_hz)


def measure_snr(clean: Waveform, noisy: Waveform) -> float:
    """SNR of ``noisy`` relative to ``clean`` in dB (``inf`` if identical)."""
    if len(clean) != len(noisy):
        raise ValueError("waveforms differ in length")
    p_signal = float(np.sum(clean.samples ** 2))
    if p_signal == 0.0:
        raise ValueError("SNR is undefined for a zero-power signal")
    p_noise = float(np.sum((noisy.samples - clean.samples) ** 2))
    if p_noise == 0.0:
        return math.inf
    return 10.0 * math.log10(p_signal / p_noise)
