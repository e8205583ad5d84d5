"""Trainable and QRAC discrete-feature embeddings for variational quantum classifiers."""

__version__ = "0.1.0"
