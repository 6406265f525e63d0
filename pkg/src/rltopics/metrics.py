"""Topic coherence, diversity and quality, cheap enough for every epoch.

Coherence uses normalized pointwise mutual information over the top-K words
of each topic. Probabilities are document frequencies from a reference
corpus; pair counts are computed lazily from per-word sorted document-id
lists, vectorized a topic at a time, and memoized so later epochs reuse
earlier pairs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import SparseDocTermMatrix
from .errors import DataFormatError

TRACE_HEADER = ["epoch", "loss", "kl", "nll", "coherence", "diversity", "quality", "perplexity"]


class CooccurrenceCache:
    """Document frequencies plus memoized pair co-occurrence counts."""

    def __init__(self, num_docs: int, doc_ids_per_word: list[np.ndarray]):
        if num_docs < 1:
            raise ValueError("reference corpus is empty")
        self.num_docs = num_docs
        self._doc_ids = doc_ids_per_word
        self.doc_freq = np.array([len(ids) for ids in doc_ids_per_word], dtype=np.int64)
        self._memo: dict[tuple[int, int], int] = {}

    @property
    def vocab_size(self) -> int:
        return len(self._doc_ids)

    def pair_count(self, i: int, j: int) -> int:
        """Documents containing both words; symmetric and memoized."""
        if i == j:
            return int(self.doc_freq[i])
        key = (i, j) if i < j else (j, i)
        count = self._memo.get(key)
        if count is None:
            count = int(np.intersect1d(self._doc_ids[i], self._doc_ids[j], assume_unique=True).size)
            self._memo[key] = count
        return count

    def pair_counts(self, ids: list[int]) -> np.ndarray:
        """All pairwise counts for one topic's word ids, as a KxK matrix.

        Missing pairs are computed in one presence-matrix product and fed
        back into the memo.
        """
        k = len(ids)
        out = np.zeros((k, k), dtype=np.int64)
        missing = False
        for a in range(k):
            out[a, a] = self.doc_freq[ids[a]]
            for b in range(a + 1, k):
                key = (ids[a], ids[b]) if ids[a] < ids[b] else (ids[b], ids[a])
                cached = self._memo.get(key)
                if cached is None:
                    missing = True
                    break
                out[a, b] = out[b, a] = cached
            if missing:
                break
        if not missing:
            return out
        presence = np.zeros((self.num_docs, k), dtype=np.float64)
        for col, wid in enumerate(ids):
            presence[self._doc_ids[wid], col] = 1.0
        counts = presence.T @ presence
        out = np.rint(counts).astype(np.int64)
        for a in range(k):
            for b in range(a + 1, k):
                if ids[a] != ids[b]:
                    key = (ids[a], ids[b]) if ids[a] < ids[b] else (ids[b], ids[a])
                    self._memo[key] = int(out[a, b])
        return out


def build_cache(bow: SparseDocTermMatrix) -> CooccurrenceCache:
    """Index which documents contain each word (presence, not counts)."""
    if bow.num_docs < 1:
        raise ValueError("reference corpus is empty")
    per_word: list[list[int]] = [[] for _ in range(bow.vocab_size)]
    for doc_id, row in enumerate(bow.rows):
        for wid, _ in row:
            per_word[wid].append(doc_id)
    doc_ids = [np.array(ids, dtype=np.int64) for ids in per_word]
    return CooccurrenceCache(bow.num_docs, doc_ids)


def _npmi(pair_count: int, df_i: int, df_j: int, num_docs: int, eps: float) -> float:
    """NPMI of one word pair from document frequencies.

    The smoothing count eps is added to the pair count only. Degenerate
    cases: a zero smoothed pair probability scores -1 (the no-cooccurrence
    limit), and a zero numerator or denominator scores 0 (no information,
    covering words that appear in every document).
    """
    if df_i == 0 or df_j == 0:
        raise ValueError("word with zero document frequency in reference corpus")
    p_i = df_i / num_docs
    p_j = df_j / num_docs
    p_ij = (pair_count + eps) / num_docs
    if p_ij == 0.0:
        return -1.0
    num = math.log(p_ij / (p_i * p_j))
    if num == 0.0:
        return 0.0
    den = -math.log(p_ij)
    if den == 0.0:
        return 0.0
    return num / den


def npmi_coherence(
    topics: list[list[int]],
    cache: CooccurrenceCache,
    eps: float = 1.0,
) -> tuple[list[float], float]:
    """Mean pairwise NPMI per topic, and the mean over topics."""
    per_topic: list[float] = []
    for ids in topics:
        k = len(ids)
        if k < 2:
            raise ValueError("coherence needs at least 2 words per topic")
        if any(w < 0 or w >= cache.vocab_size for w in ids):
            raise ValueError("topic word id outside the reference vocabulary")
        counts = cache.pair_counts(ids)
        total = 0.0
        pairs = 0
        for a in range(k):
            for b in range(a + 1, k):
                total += _npmi(
                    int(counts[a, b]),
                    int(cache.doc_freq[ids[a]]),
                    int(cache.doc_freq[ids[b]]),
                    cache.num_docs,
                    eps,
                )
                pairs += 1
        per_topic.append(total / pairs)
    return per_topic, float(np.mean(per_topic))


def topic_diversity(topics: list[list[int]]) -> float:
    """Fraction of unique words across all topics' top-K lists."""
    if not topics:
        raise ValueError("no topics given")
    k = len(topics[0])
    union: set[int] = set()
    for ids in topics:
        if len(ids) != k:
            raise ValueError("all topics must list the same number of words")
        if len(set(ids)) != k:
            raise ValueError("topic word lists must not repeat words")
        union.update(ids)
    return len(union) / (k * len(topics))


def topic_quality(coherence: float, diversity: float) -> float:
    return coherence * diversity


def top_k_words(beta: np.ndarray, k: int) -> list[list[int]]:
    """Per topic, the K word ids with the largest weights, descending.

    Ties break toward the smaller word id.
    """
    beta = np.asarray(beta)
    if beta.ndim != 2:
        raise ValueError("beta must be 2-D (topics x vocabulary)")
    vocab = beta.shape[1]
    if k > vocab:
        raise ValueError(f"k={k} exceeds vocabulary size {vocab}")
    ids = np.arange(vocab)
    topics = []
    for row in beta:
        order = np.lexsort((ids, -row))
        topics.append([int(w) for w in order[:k]])
    return topics


def perplexity(word_log_probs: np.ndarray, bow: SparseDocTermMatrix) -> float:
    """exp(total NLL / total token count), tokens counted with multiplicity."""
    if word_log_probs.shape[0] != bow.num_docs:
        raise ValueError("log-prob rows must match document count")
    total_nll = 0.0
    total_tokens = 0
    for doc_id, row in enumerate(bow.rows):
        for wid, cnt in row:
            total_nll -= cnt * float(word_log_probs[doc_id, wid])
            total_tokens += cnt
    if total_tokens == 0:
        raise ValueError("cannot compute perplexity of a corpus with zero tokens")
    return float(np.exp(total_nll / total_tokens))


@dataclass
class TopicReport:
    """Top-K words per topic plus the coherence/diversity/quality triple."""

    topics: list[list[int]]
    words: list[list[str]]
    k: int
    per_topic_coherence: list[float]
    coherence: float
    diversity: float
    quality: float


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    kl: float
    nll: float
    coherence: float
    diversity: float
    quality: float
    perplexity: float


@dataclass
class MetricsTrace:
    """Per-epoch training metrics, serialized as a fixed-header CSV."""

    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        self.records.append(record)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            for r in self.records:
                writer.writerow(
                    [r.epoch]
                    + [
                        f"{v:.6g}"
                        for v in (r.loss, r.kl, r.nll, r.coherence, r.diversity, r.quality, r.perplexity)
                    ]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricsTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != TRACE_HEADER:
                raise DataFormatError(f"{path}: unexpected trace header {header}")
            for row in reader:
                if len(row) != len(TRACE_HEADER):
                    raise DataFormatError(f"{path}: malformed trace row {row}")
                trace.append(
                    EpochRecord(
                        epoch=int(row[0]),
                        loss=float(row[1]),
                        kl=float(row[2]),
                        nll=float(row[3]),
                        coherence=float(row[4]),
                        diversity=float(row[5]),
                        quality=float(row[6]),
                        perplexity=float(row[7]),
                    )
                )
        return trace
