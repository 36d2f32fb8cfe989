"""Tagged-utterance corpora, vocabularies and BIO helpers.

Files are CoNLL-like: one ``word<TAB or space>label`` pair per line and a
blank line between utterances.  Prediction files may carry a third column.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

UNK = "<unk>"
PAD = "<pad>"
OUTSIDE = "O"


class CorpusFormatError(ValueError):
    """Malformed corpus or vocabulary file; carries the offending location."""

    def __init__(self, path, line_no, column, message):
        self.path = str(path)
        self.line_no = line_no
        self.column = column
        super().__init__(f"{path}:{line_no}:{column}: {message}")


@dataclass(frozen=True)
class BioTag:
    prefix: str
    concept: str = ""

    def __post_init__(self):
        if self.prefix not in ("B", "I", "O"):
            raise ValueError(f"bad BIO prefix {self.prefix!r}")
        if (self.prefix == "O") != (self.concept == ""):
            raise ValueError(f"inconsistent tag {self.prefix}-{self.concept}")

    @classmethod
    def parse(cls, text: str) -> "BioTag":
        if text == OUTSIDE:
            return cls("O")
        prefix, sep, concept = text.partition("-")
        if not sep or prefix not in ("B", "I") or not concept:
            raise ValueError(f"not a BIO tag: {text!r}")
        return cls(prefix, concept)

    def __str__(self):
        return OUTSIDE if self.prefix == "O" else f"{self.prefix}-{self.concept}"


def split_tag(label: str) -> tuple[str, str]:
    """Lenient split of a surface label into (prefix, concept).

    Labels that are not BIO shaped are treated as a bare concept with an
    empty prefix, so stripping still works on odd data.
    """
    if label == OUTSIDE:
        return "O", ""
    head, sep, tail = label.partition("-")
    if sep and head in ("B", "I") and tail:
        return head, tail
    return "", label


def strip_prefix(label: str) -> str:
    return split_tag(label)[1] or OUTSIDE


@dataclass(frozen=True)
class Utterance:
    words: tuple[str, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.words) == 0:
            raise ValueError("utterance must contain at least one word")
        if self.labels is not None and len(self.labels) != len(self.words):
            raise ValueError(
                f"{len(self.words)} words but {len(self.labels)} labels"
            )

    def __len__(self):
        return len(self.words)


@dataclass(frozen=True)
class Corpus:
    utterances: tuple[Utterance, ...]

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __getitem__(self, i):
        return self.utterances[i]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Sequence[str], Sequence[str] | None]]):
        return cls(tuple(
            Utterance(tuple(w), None if l is None else tuple(l)) for w, l in pairs
        ))

    @property
    def labeled(self) -> bool:
        return all(u.labels is not None for u in self.utterances)

    def n_tokens(self) -> int:
        return sum(len(u) for u in self.utterances)

    def __add__(self, other: "Corpus") -> "Corpus":
        return Corpus(self.utterances + other.utterances)


def _split_line(line: str) -> list[str]:
    return line.split("\t") if "\t" in line else line.split(" ")


def load_conll(path, require_labels: bool = True) -> Corpus:
    """Read a corpus file.

    A line with one field is accepted only when ``require_labels`` is false.
    A third column (predicted label) is ignored here; see ``load_predictions``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise CorpusFormatError(path, 1, 1, "empty file")

    utterances = []
    words, labels = [], []
    seen_unlabeled = seen_labeled = False

    def flush():
        if words:
            utterances.append(Utterance(tuple(words), tuple(labels) if labels else None))
        words.clear()
        labels.clear()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        fields = _split_line(line)
        if any(f == "" for f in fields) or len(fields) > 3:
            col = line.find("  ") + 1 if "  " in line else len(line)
            raise CorpusFormatError(path, line_no, max(col, 1),
                                    f"expected 'word<SEP>label', got {line!r}")
        if len(fields) == 1:
            if require_labels:
                raise CorpusFormatError(path, line_no, len(line) + 1, "label missing")
            seen_unlabeled = True
        else:
            seen_labeled = True
        if seen_labeled and seen_unlabeled:
            raise CorpusFormatError(path, line_no, 1,
                                    "mixture of labeled and unlabeled lines")
        words.append(fields[0])
        if len(fields) >= 2:
            labels.append(fields[1])
    flush()
    if not utterances:
        raise CorpusFormatError(path, 1, 1, "no utterances")
    return Corpus(tuple(utterances))


def save_conll(corpus: Corpus, path, predictions: Sequence[Sequence[str]] | None = None):
    """Write a corpus; with ``predictions`` a third column is appended."""
    if predictions is not None and len(predictions) != len(corpus):
        raise ValueError("predictions do not align with corpus")
    lines = []
    for idx, utt in enumerate(corpus):
        for pos, word in enumerate(utt.words):
            row = [word]
            if utt.labels is not None:
                row.append(utt.labels[pos])
            if predictions is not None:
                row.append(predictions[idx][pos])
            lines.append("\t".join(row))
        lines.append("")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_predictions(path) -> tuple[Corpus, list[list[str]]]:
    """Read a three-column prediction file into (gold corpus, predicted labels)."""
    path = Path(path)
    gold, preds = [], []
    words, labels, guessed = [], [], []
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            if words:
                gold.append((tuple(words), tuple(labels)))
                preds.append(list(guessed))
            words, labels, guessed = [], [], []
            continue
        fields = _split_line(raw)
        if len(fields) != 3:
            raise CorpusFormatError(path, line_no, 1, "expected word, gold, predicted")
        words.append(fields[0])
        labels.append(fields[1])
        guessed.append(fields[2])
    if words:
        gold.append((tuple(words), tuple(labels)))
        preds.append(list(guessed))
    return Corpus.from_pairs(gold), preds


@dataclass
class Vocab:
    """Word and label id maps.

    Word ids are dense and 0-based with UNK and PAD as the last two entries.
    ``freq`` counts word occurrences over the corpora the vocabulary was
    built from.
    """

    words: list[str]
    labels: list[str]
    freq: dict[str, int] = field(default_factory=dict)
    label_freq: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.label_index = {l: i for i, l in enumerate(self.labels)}
        if len(self.word_index) != len(self.words):
            raise ValueError("duplicate word in vocabulary")
        if len(self.label_index) != len(self.labels):
            raise ValueError("duplicate label in vocabulary")
        if UNK not in self.word_index or PAD not in self.word_index:
            raise ValueError("vocabulary must contain UNK and PAD")

    @property
    def n(self) -> int:
        return len(self.words)

    @property
    def m(self) -> int:
        return len(self.labels)

    @property
    def unk_id(self) -> int:
        return self.word_index[UNK]

    @property
    def pad_id(self) -> int:
        return self.word_index[PAD]

    def content_words(self) -> list[str]:
        return [w for w in self.words if w not in (UNK, PAD)]

    def encode_words(self, words: Sequence[str]) -> list[int]:
        unk = self.unk_id
        return [self.word_index.get(w, unk) for w in words]

    def encode_labels(self, labels: Sequence[str]) -> list[int]:
        try:
            return [self.label_index[l] for l in labels]
        except KeyError as exc:
            raise KeyError(f"label {exc.args[0]!r} not in vocabulary") from None

    def decode_words(self, ids: Iterable[int]) -> list[str]:
        return [self.words[i] for i in ids]

    def decode_labels(self, ids: Iterable[int]) -> list[str]:
        return [self.labels[i] for i in ids]

    def save(self, prefix) -> None:
        """Write ``<prefix>.words.tsv`` and ``<prefix>.labels.tsv``."""
        prefix = str(prefix)
        for suffix, tokens, counts in (
            ("words", self.words, self.freq),
            ("labels", self.labels, self.label_freq),
        ):
            with open(f"{prefix}.{suffix}.tsv", "w", encoding="utf-8") as fh:
                for i, tok in enumerate(tokens):
                    fh.write(f"{tok}\t{i}\t{counts.get(tok, 0)}\n")

    @classmethod
    def load(cls, prefix) -> "Vocab":
        prefix = str(prefix)
        tables = {}
        for suffix in ("words", "labels"):
            path = f"{prefix}.{suffix}.tsv"
            tokens, counts = [], {}
            with open(path, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, 1):
                    fields = line.rstrip("\n").split("\t")
                    if len(fields) != 3:
                        raise CorpusFormatError(path, line_no, 1, "expected token, id, count")
                    tok, idx, count = fields[0], int(fields[1]), int(fields[2])
                    if idx != len(tokens):
                        raise CorpusFormatError(path, line_no, len(tok) + 2,
                                                f"non-dense id {idx}")
                    tokens.append(tok)
                    counts[tok] = count
            tables[suffix] = (tokens, counts)
        return cls(tables["words"][0], tables["labels"][0],
                   tables["words"][1], tables["labels"][1])


def build_vocab(train: Corpus, dev: Corpus | None = None) -> Vocab:
    """Vocabulary over train+dev, words ordered by first appearance."""
    if len(train) == 0:
        raise ValueError("training corpus is empty")
    corpora = [train] if dev is None else [train, dev]
    freq: Counter = Counter()
    label_freq: Counter = Counter()
    words: dict[str, None] = {}
    labels: dict[str, None] = {}
    for corpus in corpora:
        for utt in corpus:
            for w in utt.words:
                words.setdefault(w, None)
                freq[w] += 1
            for l in utt.labels or ():
                labels.setdefault(l, None)
                label_freq[l] += 1
    for reserved in (UNK, PAD):
        if reserved in words:
            raise ValueError(f"reserved token {reserved!r} occurs in the data")
    return Vocab(list(words) + [UNK, PAD], list(labels), dict(freq), dict(label_freq))


def validate_bio(labels: Sequence[str]) -> list[int]:
    """Positions holding an I- tag that does not continue a same-concept chunk."""
    bad = []
    prev_prefix, prev_concept = "O", ""
    for pos, label in enumerate(labels):
        prefix, concept = split_tag(label)
        if prefix == "I" and not (prev_prefix in ("B", "I") and prev_concept == concept):
            bad.append(pos)
        prev_prefix, prev_concept = prefix, concept
    return bad


def report_bio_violations(corpus: Corpus, name: str = "corpus") -> int:
    """Log (never repair) BIO violations; returns how many were found."""
    total = 0
    for idx, utt in enumerate(corpus):
        if utt.labels is None:
            continue
        bad = validate_bio(utt.labels)
        if bad:
            total += len(bad)
            logger.debug("%s utterance %d: orphan I- tags at %s", name, idx, bad)
    if total:
        logger.warning("%s: %d BIO violations (kept as is)", name, total)
    return total


def frequency_order(vocab: Vocab) -> list[str]:
    """Content words by descending frequency, ties by lexicographic order."""
    return sorted(vocab.content_words(), key=lambda w: (-vocab.freq.get(w, 0), w))


def reduce_corpus(corpus: Corpus, vocab: Vocab, m_cap: int) -> Corpus:
    """Subsample utterances while keeping the whole word vocabulary covered.

    Words are visited by descending frequency.  For every word not yet
    covered, the first ``m_cap`` utterances (in corpus order) containing it
    are selected and coverage is updated.  The result keeps corpus order.
    """
    return Corpus(tuple(corpus[i] for i in _reduce_indices(corpus, vocab, m_cap)))


def _reduce_indices(corpus: Corpus, vocab: Vocab, m_cap: int) -> list[int]:
    if m_cap < 1:
        raise ValueError("m_cap must be >= 1")
    postings: dict[str, list[int]] = {}
    for idx, utt in enumerate(corpus):
        for w in dict.fromkeys(utt.words):
            postings.setdefault(w, []).append(idx)
    target = {w for w in vocab.content_words() if w in postings}
    covered: set[str] = set()
    chosen: set[int] = set()
    for word in frequency_order(vocab):
        if covered >= target:
            break
        if word in covered or word not in postings:
            continue
        for idx in postings[word][:m_cap]:
            if idx not in chosen:
                chosen.add(idx)
                covered.update(corpus[idx].words)
    return sorted(chosen)


def reduce_splits(train: Corpus, dev: Corpus, vocab: Vocab, m_cap: int) -> tuple[Corpus, Corpus]:
    """Reduce train and dev with coverage tracked over both together."""
    joint = train + dev
    keep = _reduce_indices(joint, vocab, m_cap)
    cut = len(train)
    return (
        Corpus(tuple(joint[i] for i in keep if i < cut)),
        Corpus(tuple(joint[i] for i in keep if i >= cut)),
    )
