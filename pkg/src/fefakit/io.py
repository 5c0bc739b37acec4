"""File formats: mono 16-bit WAV, spectrogram CSV, P5 PGM heatmaps and log CSVs."""

from __future__ import annotations

import csv
import io
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from fefakit.dsp import Waveform

LOG_HEADER = ["epoch", "lr", "train_loss", "train_acc", "test_acc"]


class InvalidAudioError(ValueError):
    pass


def read_wav(path) -> Waveform:
    """Read a mono int16 PCM WAV; samples are scaled to [-1, 1)."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, OSError, EOFError) as exc:
        raise InvalidAudioError(f"{path}: cannot read WAV ({exc})") from exc
    if data.dtype != np.int16:
        raise InvalidAudioError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    if data.ndim != 1:
        raise InvalidAudioError(f"{path}: expected mono, got {data.shape[1]} channels")
    if data.size == 0:
        raise InvalidAudioError(f"{path}: no samples")
    return Waveform(data.astype(np.float64) / 32768.0, int(rate))


def write_wav(path, wave: Waveform):
    """Write ``wave`` as mono int16 (clipped to the representable range)."""
    pcm = np.clip(np.rint(wave.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(wave.sample_rate_hz), pcm)


def matrix_to_csv(values) -> str:
    """One row per bin, one column per frame, ``%.9e``."""
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(values), fmt="%.9e", delimiter=",")
    return buf.getvalue()


def write_matrix_csv(path, values):
    Path(path).write_text(matrix_to_csv(values))


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def to_pgm(values) -> bytes:
    """8-bit binary PGM of ``log1p(values)`` scaled so the image maximum is 255.

    Row 0 of the image is the highest bin, so low frequencies sit at the bottom.
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError("PGM input must be finite and non-negative")
    img = np.log1p(values)
    peak = img.max()
    if peak > 0:
        img = img / peak
    pixels = np.rint(img[::-1] * 255).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(path, values):
    Path(path).write_bytes(to_pgm(values))


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    parts = blob.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5" or parts[3] != b"255":
        raise ValueError(f"{path}: not an 8-bit P5 PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def rows_to_csv(header, rows) -> str:
    """Dict rows to CSV; floats use ``repr`` so values round-trip exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in header])
    return buf.getvalue()


def training_log_csv(rows) -> str:
    return rows_to_csv(LOG_HEADER, rows)


def attention_csv(weights: dict) -> str:
    """One row per placement: the id followed by its weights (rows may differ in length)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for pid, p in weights.items():
        writer.writerow([pid] + [f"{v:.9e}" for v in p])
    return buf.getvalue()
