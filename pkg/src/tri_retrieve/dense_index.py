"""Exact top-k inner-product search over a corpus of dense embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .core import DenseEmbedding, ScoredHit
from .errors import DimensionMismatch, DuplicateDoc, EmptyInput, MissingRepresentation

__all__ = ["DenseIndex", "build_dense", "search_dense", "save_dense", "load_dense"]


@dataclass(frozen=True, eq=False)
class DenseIndex:
    """Immutable corpus of (doc_id, embedding); built once, searched many times."""

    dim: int
    entries: Tuple[Tuple[str, DenseEmbedding], ...]
    _ids: np.ndarray  # unicode array aligned with _matrix rows
    _matrix: np.ndarray  # n x dim, float64

    def __len__(self) -> int:
        return len(self.entries)


def build_dense(docs: Sequence[Tuple[str, DenseEmbedding]]) -> DenseIndex:
    """Assemble an index; duplicate ids and mixed dimensions are rejected."""
    if len(docs) == 0:
        raise EmptyInput("cannot build an index from zero documents")
    dim = docs[0][1].dim
    seen = set()
    for doc_id, emb in docs:
        if emb.dim != dim:
            raise DimensionMismatch(f"doc {doc_id!r} has dim {emb.dim}, index has dim {dim}")
        if doc_id in seen:
            raise DuplicateDoc(f"doc id {doc_id!r} inserted twice")
        seen.add(doc_id)
    ids = np.array([doc_id for doc_id, _ in docs])
    matrix = np.stack([emb.values for _, emb in docs]).astype(np.float64, copy=False)
    matrix.flags.writeable = False
    return DenseIndex(dim=dim, entries=tuple(docs), _ids=ids, _matrix=matrix)


def search_dense(index: DenseIndex, e_q: DenseEmbedding, k: int) -> List[ScoredHit]:
    """Exact top-min(k, n) hits by inner product, ScoredHit ordering.

    Selection is a partial partition by score expanded to cover boundary
    ties, so the id tie rule can never be violated by the shortcut.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if e_q.dim != index.dim:
        raise DimensionMismatch(f"query dim {e_q.dim} vs index dim {index.dim}")
    scores = index._matrix @ e_q.values
    n = scores.shape[0]
    if k >= n:
        cand = np.arange(n)
    else:
        top = np.argpartition(-scores, k - 1)[:k]
        kth_score = scores[top].min()
        cand = np.flatnonzero(scores >= kth_score)
    order = np.lexsort((index._ids[cand], -scores[cand]))[:k]
    chosen = cand[order]
    return [ScoredHit(str(index._ids[i]), float(scores[i])) for i in chosen]


def save_dense(index: DenseIndex, path: str) -> None:
    """Persist as an embeddings file plus its sidecar manifest."""
    from .pipeline import EmbeddingRecord, write_embeddings

    records = [EmbeddingRecord(doc_id, dense=emb.values) for doc_id, emb in index.entries]
    write_embeddings(records, path)


def load_dense(path: str) -> DenseIndex:
    """Rebuild an index from an embeddings file (manifest checksum verified)."""
    from .pipeline import read_embeddings

    docs = []
    for record in read_embeddings(path, verify_checksum=True):
        if record.dense is None:
            raise MissingRepresentation(f"record {record.doc_id!r} has no dense vector")
        docs.append((record.doc_id, DenseEmbedding(record.dense)))
    return build_dense(docs)
