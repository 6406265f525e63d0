"""Dense document-embedding file IO and the normalized-BoW input fallback.

EMB1 layout (little-endian, no padding, no footer):

    bytes 0-3    magic ``EMB1``
    bytes 4-7    u32 num_docs
    bytes 8-11   u32 dim
    rest         num_docs * dim IEEE-754 float32, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import SparseDocTermMatrix
from .errors import DataFormatError

_MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")


@dataclass
class EmbeddingMatrix:
    """Row-major float32 document embeddings."""

    data: np.ndarray  # (num_docs, dim) float32

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")

    @property
    def num_docs(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def take(self, indices: np.ndarray) -> np.ndarray:
        """Dense float64 rows for a batch of document indices."""
        return self.data[indices].astype(np.float64)


def write_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, matrix.num_docs, matrix.dim))
        fh.write(matrix.data.astype("<f4").tobytes())


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Parse and validate an EMB1 file."""
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise DataFormatError(f"cannot read embeddings: {err}") from err
    if len(blob) < _HEADER.size:
        raise DataFormatError(f"{path}: file shorter than EMB1 header")
    magic, num_docs, dim = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    expected = _HEADER.size + num_docs * dim * 4
    if len(blob) != expected:
        raise DataFormatError(
            f"{path}: payload size {len(blob)} does not match header "
            f"({num_docs} docs x {dim} dims requires {expected} bytes)"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(num_docs, dim)
    if not np.all(np.isfinite(data)):
        raise DataFormatError(f"{path}: embeddings contain NaN or Inf")
    return EmbeddingMatrix(data=data.copy())


def bow_input(row: list[tuple[int, int]], vocab_size: int) -> np.ndarray:
    """Dense L1-normalized count vector for one document; empty rows stay zero."""
    vec = np.zeros(vocab_size, dtype=np.float64)
    for wid, cnt in row:
        vec[wid] = cnt
    total = vec.sum()
    if total > 0:
        vec /= total
    return vec


class BowInputs:
    """Normalized-BoW model inputs backed by a CSR matrix.

    Drop-in alternative to :class:`EmbeddingMatrix` when no embedding file is
    supplied; ``dim`` equals the vocabulary size.
    """

    def __init__(self, bow: SparseDocTermMatrix):
        from scipy import sparse

        indptr = [0]
        indices: list[int] = []
        values: list[float] = []
        for row in bow.rows:
            total = sum(c for _, c in row)
            for wid, cnt in row:
                indices.append(wid)
                values.append(cnt / total)
            indptr.append(len(indices))
        self._csr = sparse.csr_matrix(
            (np.array(values, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(bow.num_docs, bow.vocab_size),
        )

    @property
    def num_docs(self) -> int:
        return self._csr.shape[0]

    @property
    def dim(self) -> int:
        return self._csr.shape[1]

    def take(self, indices: np.ndarray) -> np.ndarray:
        return np.asarray(self._csr[indices].todense(), dtype=np.float64)
