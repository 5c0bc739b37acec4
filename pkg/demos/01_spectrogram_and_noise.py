"""
Power spectrograms and test-time noise
======================================

A harmonic tone is turned into a 257-bin power spectrogram, then corrupted
with Gaussian and uniform noise at a few signal-to-noise ratios.
"""

import numpy as np

from fefakit import dsp
from fefakit.dsp import SpectrogramConfig, Waveform

sr = 16000
t = np.arange(sr) / sr
# three harmonics of 200 Hz
x = sum(a * np.sin(2 * np.pi * 200 * k * t) for k, a in [(1, 1.0), (2, 0.5), (3, 0.25)])
wave = Waveform(x, sr)

cfg = SpectrogramConfig()                       # 25 ms Hann window, 10 ms hop, 512-point FFT
spec = dsp.spectrogram(wave, cfg)
print("spectrogram shape (bins, frames):", spec.values.shape)

mean_power = spec.values.mean(axis=1)
top = np.argsort(mean_power)[::-1][:3]
print("strongest bins:", sorted(top.tolist()), "->", spec.bin_center_hz[sorted(top)], "Hz")

# Noise is scaled on the realised draw, so the measured SNR is exact.
for dist in ("gaussian", "uniform"):
    for snr in (20.0, 50.0, 100.0):
        noisy = dsp.add_noise(wave, snr, dist, seed=0)
        print(f"{dist:>8} {snr:5.0f} dB -> measured {dsp.measure_snr(wave, noisy):.9f} dB")

# At 20 dB the noise floor fills the bins between the harmonics.
noisy = dsp.spectrogram(dsp.add_noise(wave, 20.0, "gaussian", seed=0), cfg).values.mean(axis=1)
quiet_bin = 100
print(f"bin {quiet_bin} power: clean {mean_power[quiet_bin]:.3e}, 20 dB noise {noisy[quiet_bin]:.3e}")
