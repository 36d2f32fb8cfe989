"""Slot filling with label embeddings derived from word embeddings."""

__version__ = "0.1.0"
