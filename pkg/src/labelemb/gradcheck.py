"""End-to-end finite-difference checks on a tiny random problem."""
from __future__ import annotations

import numpy as np

from . import neural
from .cooccurrence import build_cooccurrence
from .corpus import Corpus, build_vocab
from .trainer import TrainConfig, assemble_model


def tiny_problem(n_words=10, n_labels=5, length=7, seed=0):
    """Random corpus with ``n_words`` + UNK + PAD words and ``n_labels`` labels.

    Returns (corpus, vocab, co-occurrence matrix); the first utterance has
    ``length`` tokens and is the one used for checking.
    """
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(n_words)]
    labels = ["O"] + [f"{p}-c{i}" for i in range((n_labels - 1) // 2 + 1) for p in "BI"]
    labels = labels[:n_labels]
    if length < n_labels:
        raise ValueError("length must be at least n_labels")
    # Every word and label appears at least once so the vocabulary sizes are exact.
    pairs = [(words[:length], [labels[i % n_labels] for i in range(length)])]
    rest = words[length:] or words[:1]
    pairs.append((rest, [labels[0]] * len(rest)))
    for _ in range(4):
        k = int(rng.integers(2, length + 1))
        pairs.append(([words[i] for i in rng.integers(0, n_words, k)],
                      [labels[i] for i in rng.integers(0, n_labels, k)]))
    corpus = Corpus.from_pairs(pairs)
    vocab = build_vocab(corpus)
    return corpus, vocab, build_cooccurrence(corpus, vocab)


def run_gradcheck(mode, embed_dim=8, gru_units=4, window=5, pool_stride=10, n_words=10,
                  n_labels=5, length=7, seed=0, epsilon=1e-5, tolerance=1e-4, corrupt=None):
    """Gradient check of every trainable tensor for one utterance.

    ``corrupt`` names a tensor whose analytic gradient is deliberately
    scaled, as a negative control.
    """
    corpus, vocab, cooc = tiny_problem(n_words, n_labels, length, seed)
    cfg = TrainConfig(mode=mode, embed_dim=embed_dim, gru_units=gru_units, window=window,
                      pool_stride=pool_stride, dropout=0.0, seed=seed)
    model = assemble_model(cfg, vocab, cooc)
    rng = np.random.default_rng(seed + 100)
    # Move off the symmetric initial point so every term is exercised.
    for name in ("le.w1", "le.w2"):
        if name in model.params:
            model.params[name] += rng.normal(0.0, 0.3, model.params[name].shape)
    for name in ("crf.start", "crf.end", "fc.b"):
        model.params[name] += rng.normal(0.0, 0.1, model.params[name].shape)
    ids, lengths, labels = model.encode([corpus[0]])
    _, grads = model.loss_and_grads(ids, lengths, labels)
    if corrupt is not None:
        if corrupt not in grads:
            raise KeyError(f"no trainable tensor named {corrupt!r}")
        grads[corrupt] = grads[corrupt] * 1.01 + 1e-3
    report = neural.grad_check(lambda: model.loss(ids, lengths, labels), model.params, grads,
                               epsilon=epsilon, tolerance=tolerance)
    return report, model
