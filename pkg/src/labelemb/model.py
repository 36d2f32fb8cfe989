"""Bi-GRU + CRF tagger with optional word-label distance features.

Topology: embeddings -> Bi-GRU -> [concat distance features] -> FC -> CRF.
``mode`` is ``bl`` (no distance features), ``le-plain`` (raw cosine
distances, k x m) or ``le-window`` (windowed, ReLU, max-pooled distances).
"""
from __future__ import annotations

import numpy as np

from . import crf, label_space, neural
from .corpus import Corpus, Vocab

MODES = ("bl", "le-plain", "le-window")


class SlotTagger:
    def __init__(self, params: dict, vocab: Vocab, config, cooccurrence=None):
        if config.mode not in MODES:
            raise ValueError(f"unknown mode {config.mode!r}; expected one of {MODES}")
        if config.mode != "bl" and cooccurrence is None:
            raise ValueError(f"mode {config.mode} needs a finalized co-occurrence matrix")
        self.params = params
        self.vocab = vocab
        self.config = config
        self.cooccurrence = None if cooccurrence is None else np.asarray(cooccurrence, dtype=float)

    @property
    def mode(self):
        return self.config.mode

    @property
    def uses_distances(self):
        return self.mode != "bl"

    @property
    def hidden(self):
        return self.params["gru.fwd.U"].shape[0]

    def parameter_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def parameter_breakdown(self) -> dict[str, int]:
        return {k: int(v.size) for k, v in self.params.items()}

    def crf_params(self) -> crf.CrfParams:
        p = self.params
        return crf.CrfParams(p["crf.trans"], p["crf.start"], p["crf.end"])

    def encode(self, utterances, with_labels=True):
        """Right-padded id arrays: (ids, lengths, labels or None)."""
        lengths = np.array([len(u) for u in utterances])
        ids = np.full((len(utterances), lengths.max()), self.vocab.pad_id)
        labels = np.zeros_like(ids) if with_labels else None
        for row, utt in enumerate(utterances):
            ids[row, :len(utt)] = self.vocab.encode_words(utt.words)
            if with_labels:
                labels[row, :len(utt)] = self.vocab.encode_labels(utt.labels)
        return ids, lengths, labels

    def forward(self, ids, lengths, masks=(None, None)):
        """Emission scores (B, T, m) and the tape for :meth:`backward`."""
        p = self.params
        embed = p["embed"]
        x = embed[ids]
        hidden, gru_tape = neural.bigru_forward(x, p, "gru", lengths, masks)
        tape = {"ids": ids, "lengths": lengths, "x": x, "gru": gru_tape}
        features = [hidden]
        if self.uses_distances:
            labels = label_space.compute_label_embeddings(
                embed, self.cooccurrence, p["le.w1"], p["le.w2"])
            plain = label_space.plain_distances(x, labels)
            tape.update(label_vectors=labels, plain=plain)
            if self.mode == "le-plain":
                features.append(plain)
            else:
                features.append(label_space.windowed_distances(
                    plain, p["le.window"], self.config.pool_stride, lengths))
        joined = np.concatenate(features, axis=-1)
        emissions, tape["fc"] = neural.dense_forward(joined, p["fc.W"], p["fc.b"])
        return emissions, tape

    def backward(self, d_emissions, tape) -> dict[str, np.ndarray]:
        p = self.params
        grads = {}
        d_joined, grads["fc.W"], grads["fc.b"] = neural.dense_backward(d_emissions, tape["fc"], p["fc.W"])
        width = 2 * self.hidden
        d_x, gru_grads = neural.bigru_backward(d_joined[..., :width], tape["gru"], p, "gru")
        grads.update(gru_grads)
        d_embed = np.zeros_like(p["embed"])
        if self.uses_distances:
            d_feat = d_joined[..., width:]
            if self.mode == "le-window":
                d_plain, grads["le.window"] = label_space.windowed_distances_backward(
                    d_feat, tape["plain"], p["le.window"], self.config.pool_stride, tape["lengths"])
            else:
                d_plain = d_feat
            d_x_dist, d_labels = label_space.plain_distances_backward(
                d_plain, tape["x"], tape["label_vectors"])
            d_x = d_x + d_x_dist
            d_embed, grads["le.w1"], grads["le.w2"] = label_space.compute_label_embeddings_backward(
                d_labels, p["embed"], self.cooccurrence, p["le.w1"], p["le.w2"])
        valid = np.arange(tape["ids"].shape[1])[None, :] < tape["lengths"][:, None]
        np.add.at(d_embed, tape["ids"][valid], d_x[valid])
        grads["embed"] = d_embed
        return grads

    def regularization(self):
        """Penalty on the label-embedding scaling weights and its gradients."""
        cfg = self.config
        names = ["le.w1", "le.w2"] + (["le.window"] if cfg.reg_window else [])
        names = [n for n in names if n in self.params]
        value = cfg.l2_reg * sum(float(np.sum(self.params[n] ** 2)) for n in names)
        return value, {n: 2.0 * cfg.l2_reg * self.params[n] for n in names}

    def _sequence_losses(self, emissions, lengths, labels, need_grad):
        d_em = np.zeros_like(emissions) if need_grad else None
        params = self.crf_params()
        d_crf = crf.CrfParams.zeros(emissions.shape[-1]) if need_grad else None
        total = 0.0
        for row, length in enumerate(lengths):
            em, gold = emissions[row, :length], labels[row, :length]
            if self.config.loss == "softmax":
                nll, g = crf.softmax_nll_and_grads(em, gold)
            else:
                nll, g, gp = crf.nll_and_grads(em, gold, params)
                if need_grad:
                    d_crf.transitions += gp.transitions
                    d_crf.start += gp.start
                    d_crf.end += gp.end
            total += nll
            if need_grad:
                d_em[row, :length] = g
        return total, d_em, d_crf

    def loss(self, ids, lengths, labels, masks=(None, None)) -> float:
        emissions, _ = self.forward(ids, lengths, masks)
        total, _, _ = self._sequence_losses(emissions, lengths, labels, need_grad=False)
        return total / len(lengths) + self.regularization()[0]

    def loss_and_grads(self, ids, lengths, labels, masks=(None, None)):
        """Mean sequence NLL over the batch plus the L2 penalty, with gradients."""
        emissions, tape = self.forward(ids, lengths, masks)
        total, d_em, d_crf = self._sequence_losses(emissions, lengths, labels, need_grad=True)
        batch = len(lengths)
        grads = self.backward(d_em / batch, tape)
        if self.config.loss != "softmax":
            grads["crf.trans"] = d_crf.transitions / batch
            grads["crf.start"] = d_crf.start / batch
            grads["crf.end"] = d_crf.end / batch
        else:
            for name in ("crf.trans", "crf.start", "crf.end"):
                grads[name] = np.zeros_like(self.params[name])
        reg, reg_grads = self.regularization()
        for name, g in reg_grads.items():
            grads[name] = grads[name] + g
        return total / batch + reg, grads

    def fc_outputs(self, corpus: Corpus, batch_size=64) -> list[np.ndarray]:
        """Pre-CRF scores per utterance, each (k, m)."""
        out = []
        utts = list(corpus)
        for start in range(0, len(utts), batch_size):
            chunk = utts[start:start + batch_size]
            ids, lengths, _ = self.encode(chunk, with_labels=False)
            emissions, _ = self.forward(ids, lengths)
            out.extend(emissions[i, :n] for i, n in enumerate(lengths))
        return out

    def predict_ids(self, corpus: Corpus) -> list[list[int]]:
        params = self.crf_params()
        preds = []
        for scores in self.fc_outputs(corpus):
            if self.config.loss == "softmax":
                preds.append([int(i) for i in scores.argmax(axis=1)])
            else:
                preds.append(crf.viterbi(scores, params)[0])
        return preds

    def predict(self, corpus: Corpus) -> list[list[str]]:
        return [self.vocab.decode_labels(p) for p in self.predict_ids(corpus)]


def init_params(config, vocab: Vocab, rng, embeddings=None) -> dict[str, np.ndarray]:
    """Fresh parameters for ``config.mode``.

    Glorot-uniform weight matrices (CRF transitions included), zero biases
    and start/end scores, N(0, 0.1) embeddings, unit scaling vectors and
    small positive window weights.
    """
    n, m, d, h = vocab.n, vocab.m, config.embed_dim, config.gru_units
    if embeddings is None:
        embeddings = rng.normal(0.0, config.embed_init_std, size=(n, d))
    elif embeddings.shape != (n, d):
        raise ValueError(f"embedding table {embeddings.shape} does not match ({n}, {d})")
    params = {"embed": np.array(embeddings, dtype=float)}
    params.update(neural.init_gru(rng, d, h, "gru.fwd"))
    params.update(neural.init_gru(rng, d, h, "gru.bwd"))
    width = 2 * h + feature_width(config, m)
    params["fc.W"] = neural.glorot_uniform(rng, width, m)
    params["fc.b"] = np.zeros(m)
    params["crf.trans"] = neural.glorot_uniform(rng, m, m)
    params["crf.start"] = np.zeros(m)
    params["crf.end"] = np.zeros(m)
    if config.mode != "bl":
        params["le.w1"] = np.ones(m)
        params["le.w2"] = np.ones(n)
    if config.mode == "le-window":
        size = config.window
        params["le.window"] = rng.uniform(0.0, 2.0 / size, size=size)
    return params


def feature_width(config, m: int) -> int:
    if config.mode == "le-plain":
        return m
    if config.mode == "le-window":
        return label_space.pooled_width(m, config.pool_stride)
    return 0


def count_parameters(config, n: int, m: int) -> dict[str, int]:
    """Trainable parameter counts by group, from shapes alone."""
    d, h = config.embed_dim, config.gru_units
    counts = {
        "embed": n * d,
        "gru": 2 * (3 * h * d + 3 * h * h + 3 * h),
        "fc": (2 * h + feature_width(config, m)) * m + m,
        "crf": m * m + 2 * m,
    }
    if config.mode != "bl":
        counts["label_scaling"] = m + n
    if config.mode == "le-window":
        counts["window"] = config.window
    counts["total"] = sum(counts.values())
    return counts
