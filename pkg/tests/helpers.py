"""Shared test utilities: finite-difference oracle and synthetic corpora."""

from __future__ import annotations

import string

import numpy as np

from rltopics.corpus import SparseDocTermMatrix, Vocabulary
from rltopics.tensor import Tape, Tensor, backward


def fd_gradient(loss_fn, tensors: list[Tensor], h: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of a scalar-valued closure.

    ``loss_fn`` must be deterministic (freeze any noise) and return a float.
    """
    grads = []
    for t in tensors:
        flat = t.data.ravel()
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            flat[i] = orig - h
            fm = loss_fn()
            flat[i] = orig
            fd[i] = (fp - fm) / (2.0 * h)
        grads.append(fd.reshape(t.data.shape))
    return grads


def autodiff_gradient(build_fn, tensors: list[Tensor]) -> list[np.ndarray]:
    """Tape gradients of a closure that builds and returns a scalar Tensor."""
    with Tape() as tape:
        loss = build_fn()
    grad_map = backward(loss, tape)
    return [grad_map.get(t, np.zeros_like(t.data)) for t in tensors]


def assert_grads_close(got, want, rel=1e-3, abs_tol=1e-5):
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, rtol=rel, atol=abs_tol)


def planted_corpus(
    num_docs: int = 2000,
    num_topics: int = 5,
    words_per_topic: int = 20,
    seed: int = 0,
    doc_len: tuple[int, int] = (20, 60),
    noise: float = 0.05,
) -> tuple[Vocabulary, SparseDocTermMatrix, list[set[int]]]:
    """Corpus with disjoint word blocks, one block per planted topic.

    Each document draws its tokens from a single topic's block, with a small
    uniform noise rate across the whole vocabulary. Returns the vocabulary,
    the bag-of-words matrix and the planted word-id sets.
    """
    rng = np.random.default_rng(seed)
    letters = string.ascii_lowercase
    words = [
        f"{letters[t]}{letters[i // 26]}{letters[i % 26]}"
        for t in range(num_topics)
        for i in range(words_per_topic)
    ]
    vocab_size = len(words)
    rows = []
    for _ in range(num_docs):
        t = int(rng.integers(num_topics))
        n = int(rng.integers(doc_len[0], doc_len[1] + 1))
        ids = []
        for _ in range(n):
            if rng.random() < noise:
                ids.append(int(rng.integers(vocab_size)))
            else:
                ids.append(t * words_per_topic + int(rng.integers(words_per_topic)))
        uniq, cnt = np.unique(ids, return_counts=True)
        rows.append([(int(w), int(c)) for w, c in zip(uniq, cnt)])
    doc_freq = [0] * vocab_size
    for row in rows:
        for wid, _ in row:
            doc_freq[wid] += 1
    vocab = Vocabulary(words=words, doc_freq=[max(df, 1) for df in doc_freq])
    bow = SparseDocTermMatrix(num_docs=num_docs, vocab_size=vocab_size, rows=rows)
    planted = [
        set(range(t * words_per_topic, (t + 1) * words_per_topic)) for t in range(num_topics)
    ]
    return vocab, bow, planted


def random_bow(rng: np.random.Generator, max_docs: int = 50, max_vocab: int = 30) -> SparseDocTermMatrix:
    """Random small corpus for metric oracles; every word occurs somewhere."""
    num_docs = int(rng.integers(2, max_docs + 1))
    vocab_size = int(rng.integers(3, max_vocab + 1))
    rows = []
    for _ in range(num_docs):
        n_words = int(rng.integers(1, vocab_size + 1))
        wids = rng.choice(vocab_size, size=n_words, replace=False)
        rows.append(sorted((int(w), int(rng.integers(1, 5))) for w in wids))
    return SparseDocTermMatrix(num_docs=num_docs, vocab_size=vocab_size, rows=rows)
