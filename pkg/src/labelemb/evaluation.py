"""Chunk-level scoring, error breakdowns and output comparisons."""
from __future__ import annotations

import functools
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import Corpus, split_tag, strip_prefix

# Small built-in list; rankings of mislabelled content words depend on it,
# so pass a proper list through --stopwords for real data.
DEFAULT_STOPWORDS = frozenset("""
a an the of to in on at for from with by and or but is are be was it this that
i me my you your we us our he she they them what which please want like
le la les l' un une des de du d' au aux et ou en dans sur pour par avec je j'
vous nous il elle ils ce c' ça est à qu' que qui euh hum ben ah oui non
""".split())


def load_stopwords(path) -> frozenset[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(w.strip() for w in lines if w.strip() and not w.startswith("#"))


class Chunk(NamedTuple):
    concept: str
    start: int
    end: int  # inclusive


def extract_chunks(labels: Sequence[str]) -> set[Chunk]:
    """Chunks under the CoNLL scorer convention.

    An I- tag that does not continue a chunk of the same concept opens a
    new chunk, exactly as the reference ``conlleval`` script does.
    """
    chunks = set()
    current: tuple[str, int] | None = None
    for pos, label in enumerate(labels):
        prefix, concept = split_tag(label)
        if current is not None and (prefix in ("B", "O") or concept != current[0]):
            chunks.add(Chunk(current[0], current[1], pos - 1))
            current = None
        if prefix != "O" and current is None:
            current = (concept, pos)
    if current is not None:
        chunks.add(Chunk(current[0], current[1], len(labels) - 1))
    return chunks


@dataclass
class ChunkScores:
    correct: int
    predicted: int
    gold: int

    @property
    def precision(self) -> float:
        return self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _gold_labels(gold) -> list[Sequence[str]]:
    if isinstance(gold, Corpus):
        if not gold.labeled:
            raise ValueError("gold corpus must be labeled")
        return [u.labels for u in gold]
    return list(gold)


def _aligned(gold, predicted):
    gold = _gold_labels(gold)
    predicted = list(predicted)
    if len(gold) != len(predicted):
        raise ValueError(f"{len(gold)} gold utterances vs {len(predicted)} predicted")
    for idx, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise ValueError(f"utterance {idx}: {len(g)} gold labels vs {len(p)} predicted")
    return gold, predicted


def conll_f1(gold, predicted) -> ChunkScores:
    gold, predicted = _aligned(gold, predicted)
    correct = n_pred = n_gold = 0
    for g, p in zip(gold, predicted):
        gc, pc = extract_chunks(g), extract_chunks(p)
        correct += len(gc & pc)
        n_pred += len(pc)
        n_gold += len(gc)
    return ChunkScores(correct, n_pred, n_gold)


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    n_utterances: int
    n_words: int
    words_with_errors: int
    utterances_with_errors: int
    words_with_errors_nobio: int
    utterances_with_errors_nobio: int
    strip_bio: bool
    error_utterances: set[int] = field(default_factory=set)
    word_errors: Counter = field(default_factory=Counter)

    def top_words(self, k=5) -> list[tuple[str, int]]:
        return sorted(self.word_errors.items(), key=lambda kv: (-kv[1], kv[0]))[:k]

    def record(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "utterances": self.n_utterances, "words": self.n_words,
            "words_with_errors": self.words_with_errors,
            "utterances_with_errors": self.utterances_with_errors,
            "words_with_errors_nobio": self.words_with_errors_nobio,
            "utterances_with_errors_nobio": self.utterances_with_errors_nobio,
        }


def _error_positions(gold, predicted, strip_bio):
    norm = strip_prefix if strip_bio else (lambda x: x)
    return [
        [i for i, (g, p) in enumerate(zip(gs, ps)) if norm(g) != norm(p)]
        for gs, ps in zip(gold, predicted)
    ]


def error_breakdown(gold: Corpus, predicted, strip_bio=False, stopwords=None) -> EvalReport:
    """Word/utterance error counts with and without BIO prefixes.

    The per-word table and the erroneous-utterance set follow ``strip_bio``;
    words in ``stopwords`` are left out of the per-word table only.
    """
    gold_labels, predicted = _aligned(gold, predicted)
    scores = conll_f1(gold_labels, predicted)
    with_bio = _error_positions(gold_labels, predicted, strip_bio=False)
    without = _error_positions(gold_labels, predicted, strip_bio=True)
    chosen = without if strip_bio else with_bio
    stop = stopwords or frozenset()
    table: Counter = Counter()
    for utt, positions in zip(gold, chosen):
        for i in positions:
            if utt.words[i] not in stop:
                table[utt.words[i]] += 1
    return EvalReport(
        precision=scores.precision, recall=scores.recall, f1=scores.f1,
        n_utterances=len(gold_labels),
        n_words=sum(len(g) for g in gold_labels),
        words_with_errors=sum(map(len, with_bio)),
        utterances_with_errors=sum(1 for e in with_bio if e),
        words_with_errors_nobio=sum(map(len, without)),
        utterances_with_errors_nobio=sum(1 for e in without if e),
        strip_bio=strip_bio,
        error_utterances={i for i, e in enumerate(chosen) if e},
        word_errors=table,
    )


@dataclass
class SystemComparison:
    shared: set[int]
    unique_a: set[int]
    unique_b: set[int]
    report_a: EvalReport
    report_b: EvalReport

    @property
    def total_a(self) -> int:
        return len(self.shared) + len(self.unique_a)

    @property
    def total_b(self) -> int:
        return len(self.shared) + len(self.unique_b)

    def word_table(self, k=5) -> list[tuple[str, int, int]]:
        """Top words by combined error count: (word, errors A, errors B)."""
        a, b = self.report_a.word_errors, self.report_b.word_errors
        words = sorted(set(a) | set(b), key=lambda w: (-(a[w] + b[w]), w))
        return [(w, a[w], b[w]) for w in words[:k]]


def compare_systems(gold: Corpus, pred_a, pred_b, strip_bio=False, stopwords=None):
    ra = error_breakdown(gold, pred_a, strip_bio, stopwords)
    rb = error_breakdown(gold, pred_b, strip_bio, stopwords)
    ea, eb = ra.error_utterances, rb.error_utterances
    return SystemComparison(ea & eb, ea - eb, eb - ea, ra, rb)


def format_comparison(cmp_bio: SystemComparison, cmp_nobio: SystemComparison,
                      names=("BL", "LE")) -> str:
    """Two-system error table laid out like the usual with/without-BIO report."""
    a, b = names
    rows = [
        ("", f"{a} (BIO)", f"{b} (BIO)", f"{a} (no BIO)", f"{b} (no BIO)"),
        ("Words with errors",
         cmp_bio.report_a.words_with_errors, cmp_bio.report_b.words_with_errors,
         cmp_nobio.report_a.words_with_errors_nobio, cmp_nobio.report_b.words_with_errors_nobio),
        ("Utterances with errors",
         cmp_bio.total_a, cmp_bio.total_b, cmp_nobio.total_a, cmp_nobio.total_b),
        ("Utterances (shared+unique)",
         f"{len(cmp_bio.shared)}+{len(cmp_bio.unique_a)}",
         f"{len(cmp_bio.shared)}+{len(cmp_bio.unique_b)}",
         f"{len(cmp_nobio.shared)}+{len(cmp_nobio.unique_a)}",
         f"{len(cmp_nobio.shared)}+{len(cmp_nobio.unique_b)}"),
    ]
    return "\n".join(
        f"{r[0]:<28}" + "".join(f"{str(c):>14}" for c in r[1:]) for r in rows
    )


def accumulate_fc_profiles(model, corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    """Per-word accumulated, l2-normalised FC outputs (n x m) and a presence mask.

    Each token's pre-CRF score vector is l2-normalised and added into its
    word's row; rows are l2-normalised again at the end.  Words that never
    occur keep a zero row and ``present`` is False for them.
    """
    vocab = model.vocab
    profiles = np.zeros((vocab.n, vocab.m))
    present = np.zeros(vocab.n, dtype=bool)
    for utt, scores in zip(corpus, model.fc_outputs(corpus)):
        ids = vocab.encode_words(utt.words)
        norms = np.linalg.norm(scores, axis=1, keepdims=True)
        np.add.at(profiles, ids, scores / np.where(norms > 0, norms, 1.0))
        present[ids] = True
    norms = np.linalg.norm(profiles, axis=1, keepdims=True)
    profiles = np.where(norms > 0, profiles / np.where(norms > 0, norms, 1.0), 0.0)
    return profiles, present


@dataclass
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    p_value: float
    n_effective: int
    method: str
    degenerate: bool = False


def _signed_ranks(a, b):
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if diff.shape != np.shape(b):
        raise ValueError("paired samples must have equal length")
    diff = diff[diff != 0]
    if diff.size == 0:
        return diff, diff
    order = np.argsort(np.abs(diff), kind="stable")
    sorted_abs = np.abs(diff)[order]
    ranks = np.empty(diff.size)
    i = 0
    while i < diff.size:
        j = i
        while j + 1 < diff.size and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return diff, ranks


@functools.lru_cache(maxsize=None)
def _sign_patterns(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)


def wilcoxon_signed_rank(sample_a, sample_b, method="auto", exact_max=12) -> WilcoxonResult:
    """Paired two-sided signed-rank test; zero differences are dropped.

    ``exact`` enumerates all 2^n sign assignments of the observed ranks;
    ``normal`` uses the tie-corrected normal approximation with continuity
    correction.  ``auto`` picks exact for n <= ``exact_max``.
    """
    diff, ranks = _signed_ranks(sample_a, sample_b)
    n = diff.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "none", degenerate=True)
    w_plus = float(ranks[diff > 0].sum())
    total = float(ranks.sum())
    stat = min(w_plus, total - w_plus)
    mean = total / 2
    if method == "auto":
        method = "exact" if n <= exact_max else "normal"
    if method == "exact":
        # Doubled ranks are integers even with ties, so comparisons are exact.
        twice = np.rint(2 * ranks).astype(np.int64)
        dist = _sign_patterns(n) @ twice
        observed = abs(int(round(2 * w_plus)) - twice.sum() / 2)
        p = float(np.mean(np.abs(dist - twice.sum() / 2) >= observed))
    elif method == "normal":
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24 - np.sum(tie_counts ** 3 - tie_counts) / 48
        if var <= 0:
            return WilcoxonResult(stat, 1.0, n, method, degenerate=True)
        z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
        p = math.erfc(z / math.sqrt(2))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(stat, min(p, 1.0), n, method)


def compare_fc_profiles(profiles_a, profiles_b, present, alpha=0.05, method="auto"):
    """Word-level paired tests between two systems' FC profiles.

    Returns ``{word_id: WilcoxonResult}`` for present words and the ids with
    p <= alpha.
    """
    results = {
        int(i): wilcoxon_signed_rank(profiles_a[i], profiles_b[i], method=method)
        for i in np.flatnonzero(present)
    }
    significant = [i for i, r in results.items() if r.p_value <= alpha and not r.degenerate]
    return results, significant
