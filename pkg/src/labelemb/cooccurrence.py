"""Label-by-word co-occurrence statistics."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import Corpus, Vocab


class CooccurrenceMatrix:
    """Counts of how often each word carries each label (rows = labels).

    ``values`` is ``None`` until :meth:`finalize` applies add-one smoothing
    and row normalisation; ``raw_counts`` is kept for analysis.
    """

    def __init__(self, raw_counts: np.ndarray, values: np.ndarray | None = None):
        self.raw_counts = np.asarray(raw_counts, dtype=np.int64)
        self.values = None if values is None else np.asarray(values, dtype=np.float64)
        if self.values is not None:
            self.values.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.raw_counts.shape

    @property
    def finalized(self) -> bool:
        return self.values is not None

    def merge(self, other: "CooccurrenceMatrix") -> "CooccurrenceMatrix":
        if self.finalized or other.finalized:
            raise ValueError("only raw count matrices can be merged")
        return CooccurrenceMatrix(self.raw_counts + other.raw_counts)

    def finalize(self) -> "CooccurrenceMatrix":
        if self.finalized:
            raise ValueError("co-occurrence matrix is already finalized")
        smoothed = self.raw_counts.astype(np.float64) + 1.0
        smoothed /= smoothed.sum(axis=1, keepdims=True)
        return CooccurrenceMatrix(self.raw_counts, smoothed)

    def save(self, path) -> None:
        """Header ``m n`` then one row of decimal reals per label.

        ``repr`` of a float is the shortest string that parses back to the
        same double, which gives a bit-exact round trip.
        """
        if not self.finalized:
            raise ValueError("finalize before saving")
        m, n = self.shape
        lines = [f"{m} {n}"]
        lines += [" ".join(repr(float(x)) for x in row) for row in self.values]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CooccurrenceMatrix":
        rows = Path(path).read_text(encoding="utf-8").split("\n")
        m, n = (int(x) for x in rows[0].split())
        values = np.array([[float(x) for x in r.split()] for r in rows[1:1 + m]])
        if values.shape != (m, n):
            raise ValueError(f"{path}: expected {m}x{n} values, got {values.shape}")
        # Raw counts are not stored in the sidecar.
        return cls(np.zeros((m, n), dtype=np.int64), values)


def count_cooccurrences(train: Corpus, vocab: Vocab) -> CooccurrenceMatrix:
    counts = np.zeros((vocab.m, vocab.n), dtype=np.int64)
    for idx, utt in enumerate(train):
        if utt.labels is None:
            raise ValueError(f"utterance {idx} has no labels")
        word_ids = vocab.encode_words(utt.words)
        label_ids = vocab.encode_labels(utt.labels)
        np.add.at(counts, (label_ids, word_ids), 1)
    return CooccurrenceMatrix(counts)


def build_cooccurrence(train: Corpus, vocab: Vocab) -> CooccurrenceMatrix:
    return count_cooccurrences(train, vocab).finalize()
