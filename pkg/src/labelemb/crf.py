"""Linear-chain CRF over per-position emission scores.

A path y of length k scores

    start[y_0] + sum_t emissions[t, y_t] + sum_t trans[y_{t-1}, y_t] + end[y_{k-1}]

All functions work on a single utterance: ``emissions`` has shape (k, m).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CrfParams:
    transitions: np.ndarray  # (m, m), from-label x to-label
    start: np.ndarray
    end: np.ndarray

    @classmethod
    def zeros(cls, m):
        return cls(np.zeros((m, m)), np.zeros(m), np.zeros(m))


def logsumexp(x, axis):
    peak = np.max(x, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    out = np.log(np.sum(np.exp(x - peak), axis=axis, keepdims=True)) + peak
    return np.squeeze(out, axis=axis)


def _check(emissions):
    emissions = np.asarray(emissions, dtype=float)
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise ValueError(f"emissions must be (k >= 1, m), got {emissions.shape}")
    return emissions


def _forward(emissions, params):
    k, m = emissions.shape
    alpha = np.empty((k, m))
    alpha[0] = params.start + emissions[0]
    for t in range(1, k):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + params.transitions, axis=0) + emissions[t]
    return alpha


def _backward(emissions, params):
    k, m = emissions.shape
    beta = np.empty((k, m))
    beta[-1] = params.end
    for t in range(k - 2, -1, -1):
        beta[t] = logsumexp(params.transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(emissions, params: CrfParams) -> float:
    alpha = _forward(_check(emissions), params)
    return float(logsumexp(alpha[-1] + params.end, axis=0))


def path_score(emissions, labels, params: CrfParams) -> float:
    emissions = _check(emissions)
    labels = np.asarray(labels)
    if labels.shape != (emissions.shape[0],):
        raise ValueError(f"{len(labels)} labels for {emissions.shape[0]} positions")
    score = params.start[labels[0]] + params.end[labels[-1]]
    score += emissions[np.arange(len(labels)), labels].sum()
    score += params.transitions[labels[:-1], labels[1:]].sum()
    return float(score)


def sequence_nll(emissions, labels, params: CrfParams) -> float:
    return log_partition(emissions, params) - path_score(emissions, labels, params)


def marginals(emissions, params: CrfParams) -> np.ndarray:
    """Posterior label probabilities per position, shape (k, m)."""
    emissions = _check(emissions)
    alpha = _forward(emissions, params)
    beta = _backward(emissions, params)
    log_z = logsumexp(alpha[-1] + params.end, axis=0)
    return np.exp(alpha + beta - log_z)


def nll_and_grads(emissions, labels, params: CrfParams):
    """Sequence NLL and its gradients.

    Returns ``(nll, d_emissions, CrfParams-of-gradients)``; the emission
    gradient is posterior marginals minus the gold one-hot.
    """
    emissions = _check(emissions)
    labels = np.asarray(labels)
    k, m = emissions.shape
    alpha = _forward(emissions, params)
    beta = _backward(emissions, params)
    log_z = logsumexp(alpha[-1] + params.end, axis=0)
    nll = float(log_z) - path_score(emissions, labels, params)

    unary = np.exp(alpha + beta - log_z)
    d_em = unary.copy()
    d_em[np.arange(k), labels] -= 1.0

    d_trans = np.zeros((m, m))
    if k > 1:
        pair = (alpha[:-1, :, None] + params.transitions[None]
                + (emissions[1:] + beta[1:])[:, None, :] - log_z)
        d_trans = np.exp(pair).sum(axis=0)
        np.subtract.at(d_trans, (labels[:-1], labels[1:]), 1.0)
    d_start = unary[0].copy()
    d_start[labels[0]] -= 1.0
    d_end = unary[-1].copy()
    d_end[labels[-1]] -= 1.0
    return nll, d_em, CrfParams(d_trans, d_start, d_end)


def viterbi(emissions, params: CrfParams) -> tuple[list[int], float]:
    """Best path and its score.

    Among equally scoring paths the lexicographically smallest label
    sequence wins: a max-product pass from the right gives the best suffix
    score for every (position, label), and decoding left to right takes the
    lowest label id that still reaches the optimum.
    """
    emissions = _check(emissions)
    k, m = emissions.shape
    suffix = np.empty((k, m))  # best score of positions t.. given label at t
    suffix[-1] = emissions[-1] + params.end
    for t in range(k - 2, -1, -1):
        suffix[t] = emissions[t] + np.max(params.transitions + suffix[t + 1][None, :], axis=1)
    total = params.start + suffix[0]
    path = [int(np.argmax(total))]
    for t in range(1, k):
        path.append(int(np.argmax(params.transitions[path[-1]] + suffix[t])))
    return path, float(total[path[0]])


def softmax_nll_and_grads(emissions, labels):
    """Token-level cross-entropy alternative to the CRF loss."""
    emissions = _check(emissions)
    labels = np.asarray(labels)
    log_p = emissions - logsumexp(emissions, axis=1)[:, None]
    nll = -float(log_p[np.arange(len(labels)), labels].sum())
    d_em = np.exp(log_p)
    d_em[np.arange(len(labels)), labels] -= 1.0
    return nll, d_em
