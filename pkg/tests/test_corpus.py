import pytest
from hypothesis import given, strategies as st

from rltopics.corpus import (
    PreprocessRules,
    SparseDocTermMatrix,
    Vocabulary,
    build_vocabulary,
    preprocess,
    read_container,
    to_bow,
    write_container,
)
from rltopics.errors import DataFormatError


def test_preprocess_lowercase_stopwords_minlen():
    rules = PreprocessRules(min_word_len=3, stopwords=frozenset({"the", "to"}))
    assert preprocess("Go to THE moon!", rules) == ["moon"]


def test_preprocess_empty_doc():
    assert preprocess("", PreprocessRules()) == []


def test_preprocess_length_boundary():
    rules = PreprocessRules(min_word_len=3)
    assert preprocess("ab abc", rules) == ["abc"]


def test_preprocess_splits_on_non_alpha():
    rules = PreprocessRules(min_word_len=0)
    assert preprocess("e-mail me: a.b@c.org", rules) == ["e", "mail", "me", "a", "b", "c", "org"]
    assert preprocess("e-mail me: a.b@c.org", PreprocessRules(min_word_len=3)) == ["mail", "org"]


def test_preprocess_idempotent():
    rules = PreprocessRules(min_word_len=3, stopwords=frozenset({"and"}))
    doc = "The QUICK-brown fox, and 99 dogs!"
    once = preprocess(doc, rules)
    assert preprocess(" ".join(once), rules) == once


@given(st.text(max_size=200))
def test_preprocess_idempotent_property(doc):
    rules = PreprocessRules(min_word_len=2, stopwords=frozenset({"of", "it"}))
    once = preprocess(doc, rules)
    assert preprocess(" ".join(once), rules) == once


def test_build_vocabulary_most_frequent():
    # total counts a:2, b:2 beat c:1
    vocab = build_vocabulary([["a", "b", "a"], ["b", "c"]], vocab_size=2)
    assert vocab.words == ["a", "b"]
    assert vocab.doc_freq == [1, 2]  # a appears (twice) in one document


def test_build_vocabulary_undersized_corpus():
    vocab = build_vocabulary([["a"]], vocab_size=5)
    assert vocab.words == ["a"]
    assert vocab.doc_freq == [1]


def test_build_vocabulary_tie_breaks_lexicographic():
    vocab = build_vocabulary([["a"], ["b"]], vocab_size=1)
    assert vocab.words == ["a"]


def test_build_vocabulary_deterministic():
    docs = [["z", "m", "a", "m"], ["q", "a"], ["z", "z"]]
    v1 = build_vocabulary(docs, 3)
    v2 = build_vocabulary(docs, 3)
    assert v1.words == v2.words
    assert v1.index_of == v2.index_of


def test_vocabulary_invariants():
    vocab = build_vocabulary([["b", "a", "b"]], vocab_size=10)
    for i, w in enumerate(vocab.words):
        assert vocab.index_of[w] == i
    assert all(df >= 1 for df in vocab.doc_freq)


def test_to_bow_counts():
    vocab = Vocabulary(words=["a", "b"], doc_freq=[1, 1])
    bow = to_bow([["a", "a", "b"]], vocab)
    assert bow.rows[0] == [(0, 2), (1, 1)]


def test_to_bow_all_oov_and_empty():
    vocab = Vocabulary(words=["a"], doc_freq=[1])
    bow = to_bow([["z"], []], vocab)
    assert bow.rows == [[], []]
    assert bow.num_docs == 2
    assert bow.empty_rows == 2


@given(st.lists(st.sampled_from(["a", "b", "c", "x", "y"]), max_size=30))
def test_to_bow_roundtrip_token_count(doc):
    vocab = Vocabulary(words=["a", "b", "c"], doc_freq=[1, 1, 1])
    bow = to_bow([doc], vocab)
    in_vocab = sum(1 for t in doc if t in vocab.index_of)
    assert sum(c for _, c in bow.rows[0]) == in_vocab


def test_container_roundtrip(tmp_path):
    rules = PreprocessRules(min_word_len=3, stopwords=frozenset({"the"}))
    docs = [["moon", "moon", "rocket"], [], ["rocket"]]
    vocab = build_vocabulary(docs, 10)
    bow = to_bow(docs, vocab)
    path = tmp_path / "c.ntmc"
    write_container(path, rules, vocab, bow)
    rules2, vocab2, bow2 = read_container(path)
    assert rules2 == rules
    assert vocab2.words == vocab.words
    assert vocab2.doc_freq == vocab.doc_freq
    assert bow2.rows == bow.rows
    assert bow2.empty_rows == 1


def test_container_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ntmc"
    path.write_text("NOPE\n")
    with pytest.raises(DataFormatError):
        read_container(path)


def test_container_rejects_truncation(tmp_path):
    rules = PreprocessRules()
    vocab = Vocabulary(words=["abc"], doc_freq=[1])
    bow = SparseDocTermMatrix(num_docs=1, vocab_size=1, rows=[[(0, 1)]])
    path = tmp_path / "c.ntmc"
    write_container(path, rules, vocab, bow)
    clipped = path.read_text().splitlines()[:-1]
    path.write_text("\n".join(clipped) + "\n")
    with pytest.raises(DataFormatError):
        read_container(path)


def test_container_rejects_out_of_range_word_id(tmp_path):
    path = tmp_path / "c.ntmc"
    path.write_text(
        'NTMC1\nrules {"lowercase":true,"min_word_len":3,"stopwords":[],"strip_non_alpha":true}\n'
        "vocab 1\nabc 1\ndocs 1\n5:1\n"
    )
    with pytest.raises(DataFormatError):
        read_container(path)
