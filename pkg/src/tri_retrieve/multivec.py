"""Per-document multi-vector storage and late-interaction reranking.

The multi-vector method never runs first-stage retrieval; it reranks a
candidate set produced elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

from .core import MultiVectorEmbedding, ScoredHit, ranked_hits
from .errors import DimensionMismatch, DuplicateDoc, UnknownDoc
from .scoring import s_mul

__all__ = ["MultiVecStore", "add_doc", "rerank"]


@dataclass(eq=False)
class MultiVecStore:
    """Build-then-freeze map doc_id -> matrix; mutate only while ingesting."""

    dim: int
    entries: Dict[str, MultiVectorEmbedding] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)


def add_doc(store: MultiVecStore, doc_id: str, mv: MultiVectorEmbedding) -> MultiVecStore:
    if mv.dim != store.dim:
        raise DimensionMismatch(f"doc {doc_id!r} has dim {mv.dim}, store has dim {store.dim}")
    if doc_id in store.entries:
        raise DuplicateDoc(f"doc id {doc_id!r} inserted twice")
    store.entries[doc_id] = mv
    return store


def rerank(
    store: MultiVecStore,
    q_mv: MultiVectorEmbedding,
    candidates: Sequence[str],
    top_n: int,
) -> List[ScoredHit]:
    """Top-min(top_n, |candidates|) by late-interaction score."""
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    missing = [c for c in candidates if c not in store.entries]
    if missing:
        raise UnknownDoc(f"candidate doc id {missing[0]!r} not in store")
    scored = [(doc_id, s_mul(q_mv, store.entries[doc_id])) for doc_id in candidates]
    return ranked_hits(scored, top_n)
