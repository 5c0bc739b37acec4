"""Synthetic speaker experiments: corpus, training, metrics, noise sweep."""
