"""Label embeddings from word embeddings and word-label distance features.

Label vectors are weighted centroids of word vectors:

    E_l = (w1 * M_c) @ (w2 * E_w)

with ``w1`` scaling the rows of the co-occurrence matrix and ``w2`` the rows
of the word embedding table.  Each word of an utterance is then compared to
every label by cosine distance; the windowed variant mixes the distances of
the surrounding positions with learned weights, applies ReLU and max-pools
along the label axis.

Every forward function has a ``*_backward`` partner taking the upstream
gradient and the same inputs.
"""
from __future__ import annotations

import math
from collections import Counter
from pathlib import Path

import numpy as np

# Incremented whenever a zero-norm vector makes a cosine distance undefined.
diagnostics: Counter = Counter()

BOUNDARY_DISTANCE = 1.0


def compute_label_embeddings(E_w, M_c, w1, w2):
    E_w, M_c = np.asarray(E_w), np.asarray(M_c)
    w1, w2 = np.asarray(w1), np.asarray(w2)
    m, n = M_c.shape
    if E_w.ndim != 2 or E_w.shape[0] != n or w1.shape != (m,) or w2.shape != (n,):
        raise ValueError(
            f"shape mismatch: M_c {M_c.shape}, E_w {E_w.shape}, w1 {w1.shape}, w2 {w2.shape}"
        )
    return (w1[:, None] * M_c) @ (w2[:, None] * E_w)


def compute_label_embeddings_backward(grad, E_w, M_c, w1, w2):
    """Returns gradients with respect to (E_w, w1, w2)."""
    weighted_c = w1[:, None] * M_c
    weighted_w = w2[:, None] * E_w
    d_weighted_c = grad @ weighted_w.T
    d_weighted_w = weighted_c.T @ grad
    d_w1 = np.sum(d_weighted_c * M_c, axis=1)
    d_w2 = np.sum(d_weighted_w * E_w, axis=1)
    d_E_w = d_weighted_w * w2[:, None]
    return d_E_w, d_w1, d_w2


def _unit_rows(x):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, x / safe, 0.0), norms, safe


def plain_distances(word_vectors, label_vectors):
    """Cosine distances ``1 - cos`` between words (``..., k, d``) and labels (``m, d``).

    A zero-norm vector gets distance 1.0 to everything and is counted in
    ``diagnostics["zero_norm"]``.
    """
    unit_w, norm_w, _ = _unit_rows(word_vectors)
    unit_l, norm_l, _ = _unit_rows(label_vectors)
    zeros = int(np.sum(norm_w == 0)) + int(np.sum(norm_l == 0))
    if zeros:
        diagnostics["zero_norm"] += zeros
    return 1.0 - unit_w @ unit_l.T


def plain_distances_backward(grad, word_vectors, label_vectors):
    """Returns gradients with respect to (word_vectors, label_vectors)."""
    unit_w, norm_w, safe_w = _unit_rows(word_vectors)
    unit_l, norm_l, safe_l = _unit_rows(label_vectors)
    d_unit_w = -grad @ unit_l
    d_unit_l = -(grad.reshape(-1, grad.shape[-1]).T @ unit_w.reshape(-1, unit_w.shape[-1]))

    def through_norm(d_unit, unit, norm, safe):
        radial = np.sum(unit * d_unit, axis=-1, keepdims=True)
        return np.where(norm > 0, (d_unit - unit * radial) / safe, 0.0)

    return (
        through_norm(d_unit_w, unit_w, norm_w, safe_w),
        through_norm(d_unit_l, unit_l, norm_l, safe_l),
    )


def pooled_width(m: int, stride: int) -> int:
    return math.ceil(m / stride)


def _window_scores(plain, window_weights, lengths):
    plain = np.asarray(plain, dtype=float)
    squeeze = plain.ndim == 2
    if squeeze:
        plain = plain[None]
    batch, k, m = plain.shape
    size = len(window_weights)
    if size % 2 != 1:
        raise ValueError("window weight vector must have odd length 2q+1")
    q = size // 2
    if lengths is None:
        lengths = np.full(batch, k)
    valid = np.arange(k)[None, :] < np.asarray(lengths)[:, None]
    padded = np.full((batch, k + 2 * q, m), BOUNDARY_DISTANCE)
    padded[:, q:q + k] = np.where(valid[..., None], plain, BOUNDARY_DISTANCE)
    scores = np.zeros((batch, k, m))
    for offset in range(size):
        scores += window_weights[offset] * padded[:, offset:offset + k]
    return padded, scores, valid, squeeze


def _pool_groups(activated, stride):
    *lead, m = activated.shape
    groups = pooled_width(m, stride)
    filled = np.full((*lead, groups * stride), -np.inf)
    filled[..., :m] = activated
    return filled.reshape(*lead, groups, stride)


def windowed_distances(plain, window_weights, stride, lengths=None):
    """Context-window distance features, shape ``(..., k, ceil(m / stride))``.

    For word i and label j the distances of positions i-q..i+q to label j are
    combined with ``window_weights`` (length 2q+1).  Positions outside the
    utterance (or beyond ``lengths`` in a padded batch) read as distance 1.0.
    """
    _, scores, _, squeeze = _window_scores(plain, window_weights, lengths)
    out = _pool_groups(np.maximum(scores, 0.0), stride).max(axis=-1)
    return out[0] if squeeze else out


def windowed_distances_backward(grad, plain, window_weights, stride, lengths=None):
    """Returns gradients with respect to (plain, window_weights).

    Max-pooling routes the gradient to the first maximal entry of a group.
    """
    padded, scores, valid, squeeze = _window_scores(plain, window_weights, lengths)
    if squeeze:
        grad = grad[None]
    batch, k, m = scores.shape
    groups = _pool_groups(np.maximum(scores, 0.0), stride)
    winner = groups.argmax(axis=-1)
    d_groups = np.zeros_like(groups)
    np.put_along_axis(d_groups, winner[..., None], grad[..., None], axis=-1)
    d_scores = d_groups.reshape(batch, k, -1)[..., :m] * (scores > 0)

    size = len(window_weights)
    d_weights = np.array([
        np.sum(d_scores * padded[:, o:o + k]) for o in range(size)
    ])
    d_padded = np.zeros_like(padded)
    for offset in range(size):
        d_padded[:, offset:offset + k] += window_weights[offset] * d_scores
    q = size // 2
    d_plain = d_padded[:, q:q + k] * valid[..., None]
    return (d_plain[0] if squeeze else d_plain), d_weights


def load_pretrained(path, vocab, dim, rng, scale=0.1):
    """Embedding table from a ``word v1 ... vd`` text file.

    Words missing from the file keep a N(0, scale) random row.  Returns the
    table and the number of rows that were found in the file.
    """
    table = rng.normal(0.0, scale, size=(vocab.n, dim))
    found = 0
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            fields = line.rstrip().split(" ")
            if len(fields) < 2:
                continue
            word = fields[0]
            if word not in vocab.word_index:
                continue
            if len(fields) - 1 != dim:
                raise ValueError(
                    f"{path}:{line_no}: expected {dim} values, found {len(fields) - 1}"
                )
            table[vocab.word_index[word]] = [float(x) for x in fields[1:]]
            found += 1
    return table, found
