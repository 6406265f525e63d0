"""Text preprocessing, vocabulary construction and sparse bag-of-words.

The preprocessed-corpus container (``NTMC`` format, version 1) is a plain
UTF-8 text file:

    line 1              NTMC1
    line 2              rules <json, sorted keys>
    line 3              vocab <V>
    next V lines        <word> <doc_freq>
    next line           docs <D>
    next D lines        space-separated ``word_id:count`` pairs, ascending
                        word_id; an empty line is an empty document

Counts are decimal integers. Field order is fixed.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataFormatError

log = logging.getLogger(__name__)

_MAGIC = "NTMC1"
_WORD_RE_LOWER = re.compile(r"[a-z]+")
_WORD_RE_ANY = re.compile(r"[A-Za-z]+")


@dataclass(frozen=True)
class PreprocessRules:
    """Token filters applied to every raw document."""

    lowercase: bool = True
    strip_non_alpha: bool = True
    min_word_len: int = 3
    stopwords: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.min_word_len < 0:
            raise ValueError("min_word_len must be >= 0")


@dataclass
class Vocabulary:
    """Ordered word list with id lookup and per-word document frequencies."""

    words: list[str]
    doc_freq: list[int]
    index_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.words) != len(self.doc_freq):
            raise ValueError("words and doc_freq must align")
        self.index_of = {w: i for i, w in enumerate(self.words)}
        if len(self.index_of) != len(self.words):
            raise ValueError("vocabulary words must be unique")

    def __len__(self) -> int:
        return len(self.words)


@dataclass
class SparseDocTermMatrix:
    """Per-document (word_id, count) rows over a fixed vocabulary."""

    num_docs: int
    vocab_size: int
    rows: list[list[tuple[int, int]]]
    empty_rows: int = 0

    def __post_init__(self):
        if len(self.rows) != self.num_docs:
            raise ValueError("row count must equal num_docs")

    def total_tokens(self) -> int:
        return sum(c for row in self.rows for _, c in row)


def preprocess(raw_doc: str, rules: PreprocessRules) -> list[str]:
    """Tokenize one document according to the rules.

    Tokenization splits on runs of non-alphabetic characters (whitespace only
    when ``strip_non_alpha`` is off). Length is measured in letters.
    """
    text = raw_doc.lower() if rules.lowercase else raw_doc
    if rules.strip_non_alpha:
        pattern = _WORD_RE_LOWER if rules.lowercase else _WORD_RE_ANY
        tokens = pattern.findall(text)
    else:
        tokens = text.split()
    out = []
    for tok in tokens:
        if sum(c.isalpha() for c in tok) < rules.min_word_len:
            continue
        if tok in rules.stopwords:
            continue
        out.append(tok)
    return out


def build_vocabulary(docs: list[list[str]], vocab_size: int) -> Vocabulary:
    """Keep the ``vocab_size`` most frequent words by total corpus count.

    Frequency ties break lexicographically ascending; the retained words are
    stored in lexicographic order. A corpus with fewer distinct words than
    ``vocab_size`` keeps them all.
    """
    if vocab_size < 1:
        raise ValueError("vocab_size must be >= 1")
    totals: Counter[str] = Counter()
    doc_counts: Counter[str] = Counter()
    for doc in docs:
        totals.update(doc)
        doc_counts.update(set(doc))
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = sorted(w for w, _ in ranked[:vocab_size])
    return Vocabulary(words=kept, doc_freq=[doc_counts[w] for w in kept])


def to_bow(docs: list[list[str]], vocab: Vocabulary) -> SparseDocTermMatrix:
    """Count in-vocabulary tokens per document; OOV tokens are dropped.

    Documents whose tokens are all OOV stay in the matrix as empty rows so
    document indices keep lining up with any embedding matrix.
    """
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty")
    index = vocab.index_of
    rows: list[list[tuple[int, int]]] = []
    empty = 0
    for doc in docs:
        counts = Counter(index[t] for t in doc if t in index)
        row = sorted(counts.items())
        if not row:
            empty += 1
        rows.append(row)
    if empty:
        log.warning("%d of %d documents have no in-vocabulary tokens", empty, len(docs))
    return SparseDocTermMatrix(
        num_docs=len(docs), vocab_size=len(vocab), rows=rows, empty_rows=empty
    )


def read_raw_corpus(path: str | Path) -> list[str]:
    """Read a UTF-8 corpus file, one document per line."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _rules_to_json(rules: PreprocessRules) -> str:
    payload = {
        "lowercase": rules.lowercase,
        "min_word_len": rules.min_word_len,
        "stopwords": sorted(rules.stopwords),
        "strip_non_alpha": rules.strip_non_alpha,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def write_container(
    path: str | Path,
    rules: PreprocessRules,
    vocab: Vocabulary,
    bow: SparseDocTermMatrix,
) -> None:
    """Write the versioned preprocessed-corpus container."""
    if bow.vocab_size != len(vocab):
        raise ValueError("bow vocab_size does not match vocabulary")
    lines = [_MAGIC, f"rules {_rules_to_json(rules)}", f"vocab {len(vocab)}"]
    for word, df in zip(vocab.words, vocab.doc_freq):
        lines.append(f"{word} {df}")
    lines.append(f"docs {bow.num_docs}")
    for row in bow.rows:
        lines.append(" ".join(f"{wid}:{cnt}" for wid, cnt in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_container(path: str | Path) -> tuple[PreprocessRules, Vocabulary, SparseDocTermMatrix]:
    """Read and validate an NTMC1 container."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise DataFormatError(f"cannot read corpus container: {err}") from err
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise DataFormatError(f"{path}: truncated container")
        line = lines[pos]
        pos += 1
        return line

    if take() != _MAGIC:
        raise DataFormatError(f"{path}: bad magic, expected {_MAGIC}")
    rules_line = take()
    if not rules_line.startswith("rules "):
        raise DataFormatError(f"{path}: expected rules line")
    try:
        payload = json.loads(rules_line[len("rules "):])
        rules = PreprocessRules(
            lowercase=bool(payload["lowercase"]),
            strip_non_alpha=bool(payload["strip_non_alpha"]),
            min_word_len=int(payload["min_word_len"]),
            stopwords=frozenset(payload["stopwords"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        raise DataFormatError(f"{path}: malformed rules line: {err}") from err

    header = take().split()
    if len(header) != 2 or header[0] != "vocab":
        raise DataFormatError(f"{path}: expected vocab header")
    nwords = int(header[1])
    words, freqs = [], []
    for _ in range(nwords):
        parts = take().split()
        if len(parts) != 2:
            raise DataFormatError(f"{path}: malformed vocab entry")
        words.append(parts[0])
        freqs.append(int(parts[1]))
    vocab = Vocabulary(words=words, doc_freq=freqs)

    header = take().split()
    if len(header) != 2 or header[0] != "docs":
        raise DataFormatError(f"{path}: expected docs header")
    ndocs = int(header[1])
    rows: list[list[tuple[int, int]]] = []
    empty = 0
    for _ in range(ndocs):
        line = take()
        row: list[tuple[int, int]] = []
        if line:
            for pair in line.split():
                wid_s, _, cnt_s = pair.partition(":")
                try:
                    wid, cnt = int(wid_s), int(cnt_s)
                except ValueError as err:
                    raise DataFormatError(f"{path}: malformed row entry {pair!r}") from err
                if wid >= nwords or wid < 0 or cnt < 1:
                    raise DataFormatError(f"{path}: invalid row entry {pair!r}")
                row.append((wid, cnt))
        if not row:
            empty += 1
        rows.append(row)
    if pos != len(lines):
        raise DataFormatError(f"{path}: trailing data after document rows")
    bow = SparseDocTermMatrix(
        num_docs=ndocs, vocab_size=nwords, rows=rows, empty_rows=empty
    )
    return rules, vocab, bow
