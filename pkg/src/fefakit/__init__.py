"""Frequency-bin attention (FEFA) for spectrogram CNNs, in plain NumPy."""

__version__ = "0.1.0"
