"""Inverted index over learned term weights, plus a BM25 baseline scorer.

Retrieval is exact term-at-a-time accumulation: no pruning, no
score-at-a-time shortcuts. Documents sharing no query term are simply
unreachable, which is the intended behavior of the lexical channel.

=== Binary index layout (version 1) ===

All integers little-endian.

    header:
        magic        4 bytes  b"TRSX"
        version      u32      1
        doc_count    u64
        term_count   u64
    doc table, doc_count records (ordinal = record position):
        id_len       u32
        id           id_len bytes, UTF-8
        token_count  u64
    term records, term_count records:
        term_id      u64
        n_weights    u64
        posting      n_weights x (doc_ordinal u64, weight f64)
        n_tfs        u64
        tf_posting   n_tfs x (doc_ordinal u64, tf u64)

Postings are stored sorted by doc_id, exactly as held in memory, and
`avg_doc_length` is recomputed from the doc table on load, so a
save/load round trip reproduces the index field for field.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .core import ScoredHit, TermWeightVector, ranked_hits
from .errors import DuplicateDoc, EmptyInput, ParseError, UnknownDoc
from .fileio import atomic_write

__all__ = [
    "SparseIndex",
    "build_sparse",
    "search_sparse",
    "bm25_score",
    "rank_bm25",
    "save_sparse",
    "load_sparse",
]

_MAGIC = b"TRSX"
_VERSION = 1

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


@dataclass(frozen=True, eq=False)
class SparseIndex:
    """Build-then-freeze inverted index.

    postings: term-id -> [(doc_id, weight)] with weight > 0, sorted by doc_id.
    doc_term_freqs: term-id -> [(doc_id, tf)], same ordering, for BM25.
    """

    postings: Dict[int, List[Tuple[str, float]]]
    doc_count: int
    doc_lengths: Dict[str, int]
    avg_doc_length: float
    doc_term_freqs: Dict[int, List[Tuple[str, int]]]
    _tf_lookup: Dict[int, Dict[str, int]]

    def __len__(self) -> int:
        return self.doc_count


def build_sparse(
    docs: Sequence[Tuple[str, TermWeightVector, int, Dict[int, int]]],
) -> SparseIndex:
    """Build the index from (doc_id, term weights, token count, term freqs).

    Zero-weight terms are dropped from the weight postings (they can never
    contribute to a lexical score) but keep their term-frequency entries,
    which BM25 consumes independently of the learned weights.
    """
    if len(docs) == 0:
        raise EmptyInput("cannot build an index from zero documents")
    postings: Dict[int, List[Tuple[str, float]]] = {}
    tfs: Dict[int, List[Tuple[str, int]]] = {}
    doc_lengths: Dict[str, int] = {}
    for doc_id, weights, token_count, term_freqs in docs:
        if doc_id in doc_lengths:
            raise DuplicateDoc(f"doc id {doc_id!r} inserted twice")
        if token_count < 0:
            raise ValueError(f"negative token count for doc {doc_id!r}")
        doc_lengths[doc_id] = int(token_count)
        for term, weight in weights.entries.items():
            if weight > 0.0:
                postings.setdefault(int(term), []).append((doc_id, float(weight)))
        for term, tf in term_freqs.items():
            if tf < 0:
                raise ValueError(f"negative term frequency for doc {doc_id!r}, term {term}")
            if tf > 0:
                tfs.setdefault(int(term), []).append((doc_id, int(tf)))
    for plist in postings.values():
        plist.sort(key=lambda entry: entry[0])
    for tlist in tfs.values():
        tlist.sort(key=lambda entry: entry[0])
    return SparseIndex(
        postings=postings,
        doc_count=len(doc_lengths),
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths.values()) / len(doc_lengths),
        doc_term_freqs=tfs,
        _tf_lookup={term: dict(tlist) for term, tlist in tfs.items()},
    )


def search_sparse(index: SparseIndex, q: TermWeightVector, k: int) -> List[ScoredHit]:
    """Exact top-k by summed weight products; zero-overlap docs excluded."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    acc: Dict[str, float] = {}
    for term, w_q in q.entries.items():
        if w_q <= 0.0:
            continue
        for doc_id, w_p in index.postings.get(term, ()):
            acc[doc_id] = acc.get(doc_id, 0.0) + w_q * w_p
    return ranked_hits(acc.items(), k)


def _idf(n_docs: int, df: int) -> float:
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def bm25_score(
    index: SparseIndex,
    q_terms: Sequence[int],
    doc_id: str,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> float:
    """Okapi BM25 with the non-negative ln(1 + .) IDF.

    Query terms are summed with multiplicity; terms absent from the
    document contribute 0.
    """
    if doc_id not in index.doc_lengths:
        raise UnknownDoc(f"doc id {doc_id!r} not in index")
    length_ratio = index.doc_lengths[doc_id] / index.avg_doc_length if index.avg_doc_length else 0.0
    score = 0.0
    for term in q_terms:
        tf = index._tf_lookup.get(int(term), {}).get(doc_id, 0)
        if tf == 0:
            continue
        df = len(index.doc_term_freqs[int(term)])
        denom = tf + k1 * (1.0 - b + b * length_ratio)
        score += _idf(index.doc_count, df) * tf * (k1 + 1.0) / denom
    return score


def rank_bm25(
    index: SparseIndex,
    q_terms: Sequence[int],
    k: int,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> List[ScoredHit]:
    """Top-k documents by BM25, term-at-a-time over the tf postings.

    Documents matching no query term score exactly 0 and are excluded.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    acc: Dict[str, float] = {}
    for term, count in Counter(int(t) for t in q_terms).items():
        tlist = index.doc_term_freqs.get(term)
        if not tlist:
            continue
        idf = _idf(index.doc_count, len(tlist))
        for doc_id, tf in tlist:
            ratio = index.doc_lengths[doc_id] / index.avg_doc_length
            denom = tf + k1 * (1.0 - b + b * ratio)
            acc[doc_id] = acc.get(doc_id, 0.0) + count * idf * tf * (k1 + 1.0) / denom
    return ranked_hits(acc.items(), k)


# ---- persistence ----


def save_sparse(index: SparseIndex, path: str) -> None:
    """Serialize to the documented binary layout, atomically."""
    doc_ids = list(index.doc_lengths)
    ordinals = {doc_id: i for i, doc_id in enumerate(doc_ids)}
    terms = sorted(set(index.postings) | set(index.doc_term_freqs))
    with atomic_write(path, "wb") as out:
        out.write(_MAGIC)
        out.write(struct.pack("<IQQ", _VERSION, len(doc_ids), len(terms)))
        for doc_id in doc_ids:
            raw = doc_id.encode("utf-8")
            out.write(struct.pack("<I", len(raw)))
            out.write(raw)
            out.write(struct.pack("<Q", index.doc_lengths[doc_id]))
        for term in terms:
            plist = index.postings.get(term, [])
            tlist = index.doc_term_freqs.get(term, [])
            out.write(struct.pack("<QQ", term, len(plist)))
            for doc_id, weight in plist:
                out.write(struct.pack("<Qd", ordinals[doc_id], weight))
            out.write(struct.pack("<Q", len(tlist)))
            for doc_id, tf in tlist:
                out.write(struct.pack("<QQ", ordinals[doc_id], tf))


class _Reader:
    """Cursor over the index file with ParseError-producing reads."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise ParseError("truncated index file")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def take_bytes(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise ParseError("truncated index file")
        raw = self.data[self.offset : self.offset + size]
        self.offset += size
        return raw


def load_sparse(path: str) -> SparseIndex:
    with open(path, "rb") as handle:
        data = handle.read()
    reader = _Reader(data)
    if reader.take_bytes(4) != _MAGIC:
        raise ParseError("not a sparse index file (bad magic)")
    (version, doc_count, term_count) = reader.take("<IQQ")
    if version != _VERSION:
        raise ParseError(f"unsupported index version {version}")
    doc_ids: List[str] = []
    doc_lengths: Dict[str, int] = {}
    for _ in range(doc_count):
        (id_len,) = reader.take("<I")
        doc_id = reader.take_bytes(id_len).decode("utf-8")
        (token_count,) = reader.take("<Q")
        if doc_id in doc_lengths:
            raise ParseError(f"duplicate doc id {doc_id!r} in doc table")
        doc_ids.append(doc_id)
        doc_lengths[doc_id] = token_count
    if not doc_ids:
        raise ParseError("index holds zero documents")
    postings: Dict[int, List[Tuple[str, float]]] = {}
    tfs: Dict[int, List[Tuple[str, int]]] = {}
    for _ in range(term_count):
        (term, n_weights) = reader.take("<QQ")
        if n_weights:
            plist = []
            for _ in range(n_weights):
                (ordinal, weight) = reader.take("<Qd")
                plist.append((doc_ids[ordinal], weight))
            postings[term] = plist
        (n_tfs,) = reader.take("<Q")
        if n_tfs:
            tlist = []
            for _ in range(n_tfs):
                (ordinal, tf) = reader.take("<QQ")
                tlist.append((doc_ids[ordinal], tf))
            tfs[term] = tlist
    if reader.offset != len(data):
        raise ParseError("trailing bytes after index payload")
    return SparseIndex(
        postings=postings,
        doc_count=len(doc_ids),
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths.values()) / len(doc_ids),
        doc_term_freqs=tfs,
        _tf_lookup={term: dict(tlist) for term, tlist in tfs.items()},
    )
