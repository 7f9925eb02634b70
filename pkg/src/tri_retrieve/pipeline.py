"""Hybrid retrieval orchestration and the embeddings interchange format.

A hybrid run has two stages: first-stage candidate generation (dense
and, for the union pool, sparse), then exact fused rescoring of the
pool with weighted_score. Components are always recomputed for pool
members rather than reusing first-stage scores, so a doc found by only
one method still gets a well-defined fused score. A method that is
disabled, or carries weight zero, contributes component 0.

The interchange format is line-oriented: one document per line as a
JSON object with fields `id`, optional `dense` (array), optional
`sparse` (map of term id string to weight), optional `colbert` (array
of arrays). A sidecar `<path>.manifest.json` records `dim`, `count`
and the data file's sha256.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .core import DenseEmbedding, FusionWeights, MultiVectorEmbedding, ScoredHit, TermWeightVector, ranked_hits
from .dense_index import DenseIndex, search_dense
from .errors import DimensionMismatch, MissingRepresentation, ParseError, UnknownDoc
from .fileio import atomic_write, sha256_file
from .multivec import MultiVecStore
from .scoring import s_mul, weighted_score
from .sparse_index import SparseIndex, search_sparse

__all__ = [
    "EmbeddingRecord",
    "HybridConfig",
    "PRESETS",
    "POOL_DENSE_TOP",
    "POOL_UNION",
    "retrieve_hybrid",
    "mine_hard_negatives",
    "read_embeddings",
    "write_embeddings",
    "ingest_embeddings",
    "manifest_path",
]

POOL_DENSE_TOP = "dense_top"
POOL_UNION = "union_dense_sparse"


class EmbeddingRecord:
    """One document's representations; at least one must be present."""

    __slots__ = ("doc_id", "dense", "sparse", "multivec")

    def __init__(
        self,
        doc_id: str,
        dense: Optional[np.ndarray] = None,
        sparse: Optional[Dict[int, float]] = None,
        multivec: Optional[np.ndarray] = None,
    ):
        if dense is None and sparse is None and multivec is None:
            raise ValueError(f"record {doc_id!r} carries no representation")
        self.doc_id = str(doc_id)
        if dense is not None:
            dense = np.asarray(dense, dtype=np.float64)
            if dense.ndim != 1:
                raise ValueError(f"dense vector for {doc_id!r} must be 1-d")
            dense = dense.copy()
            dense.flags.writeable = False
        self.dense = dense
        if sparse is not None:
            sparse = {int(t): float(w) for t, w in sparse.items()}
        self.sparse = sparse
        if multivec is not None:
            multivec = np.asarray(multivec, dtype=np.float64)
            if multivec.ndim != 2:
                raise ValueError(f"multivec matrix for {doc_id!r} must be 2-d")
            multivec = multivec.copy()
            multivec.flags.writeable = False
        self.multivec = multivec

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        if self.doc_id != other.doc_id or self.sparse != other.sparse:
            return False
        for a, b in ((self.dense, other.dense), (self.multivec, other.multivec)):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True

    def __repr__(self) -> str:
        parts = [r for r, v in (("dense", self.dense), ("sparse", self.sparse), ("multivec", self.multivec)) if v is not None]
        return f"EmbeddingRecord({self.doc_id!r}, {'+'.join(parts)})"


def manifest_path(path: str) -> str:
    return path + ".manifest.json"


def _record_dim(record: EmbeddingRecord) -> Optional[int]:
    if record.dense is not None:
        return int(record.dense.shape[0])
    if record.multivec is not None:
        return int(record.multivec.shape[1])
    return None


def write_embeddings(records: Sequence[EmbeddingRecord], path: str) -> None:
    """Write records as JSON lines plus the sidecar manifest."""
    dim: Optional[int] = None
    for record in records:
        d = _record_dim(record)
        if d is None:
            continue
        if dim is None:
            dim = d
        elif d != dim:
            raise DimensionMismatch(f"record {record.doc_id!r} has dim {d}, file has dim {dim}")
        if record.multivec is not None and record.multivec.shape[1] != dim:
            raise DimensionMismatch(f"record {record.doc_id!r} multivec dim {record.multivec.shape[1]} != {dim}")
    with atomic_write(path) as fh:
        for record in records:
            obj: Dict[str, object] = {"id": record.doc_id}
            if record.dense is not None:
                obj["dense"] = record.dense.tolist()
            if record.sparse is not None:
                obj["sparse"] = {str(t): record.sparse[t] for t in sorted(record.sparse)}
            if record.multivec is not None:
                obj["colbert"] = record.multivec.tolist()
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
    manifest = {"dim": dim, "count": len(records), "sha256": sha256_file(path)}
    with atomic_write(manifest_path(path)) as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_record(obj: dict, lineno: int) -> EmbeddingRecord:
    if not isinstance(obj, dict) or "id" not in obj or not isinstance(obj["id"], str):
        raise ParseError("record must be an object with a string `id`", line=lineno)
    doc_id = obj["id"]
    dense = obj.get("dense")
    sparse_raw = obj.get("sparse")
    colbert = obj.get("colbert")
    if dense is None and sparse_raw is None and colbert is None:
        raise ParseError(f"record {doc_id!r} has no representation", line=lineno)
    sparse = None
    if sparse_raw is not None:
        if not isinstance(sparse_raw, dict):
            raise ParseError(f"sparse field of {doc_id!r} must be a map", line=lineno)
        sparse = {}
        for key, value in sparse_raw.items():
            try:
                term = int(key)
            except ValueError:
                raise ParseError(f"sparse term {key!r} is not an integer", line=lineno) from None
            weight = float(value)
            if term < 0 or not np.isfinite(weight) or weight < 0.0:
                raise ParseError(f"bad sparse entry {key!r}: {value!r}", line=lineno)
            sparse[term] = weight
    try:
        return EmbeddingRecord(doc_id, dense=dense, sparse=sparse, multivec=colbert)
    except ValueError as exc:
        raise ParseError(str(exc), line=lineno) from None


def read_embeddings(path: str, verify_checksum: bool = False) -> List[EmbeddingRecord]:
    """Parse an embeddings file, validated against its manifest.

    The manifest's count and dim must agree with the data; the sha256 is
    checked only when verify_checksum is set, sparing a second pass on
    large files.
    """
    mpath = manifest_path(path)
    if not os.path.exists(mpath):
        raise ParseError(f"missing manifest {mpath}")
    with open(mpath, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"manifest is not valid JSON: {exc}") from None
    for key in ("dim", "count", "sha256"):
        if key not in manifest:
            raise ParseError(f"manifest lacks the {key!r} field")
    if verify_checksum and sha256_file(path) != manifest["sha256"]:
        raise ParseError(f"checksum mismatch for {path}")

    records: List[EmbeddingRecord] = []
    dim = manifest["dim"]
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
            record = _parse_record(obj, lineno)
            d = _record_dim(record)
            if d is not None and d != dim:
                raise ParseError(f"record {record.doc_id!r} has dim {d}, manifest says {dim}", line=lineno)
            records.append(record)
    if len(records) != manifest["count"]:
        raise ParseError(f"manifest promises {manifest['count']} records, file has {len(records)}")
    return records


def ingest_embeddings(path: str) -> List[EmbeddingRecord]:
    """Parse a bare embeddings file that has no sidecar manifest.

    The ingest path for records produced outside this package; re-write
    with write_embeddings to attach a manifest and dim validation.
    """
    records: List[EmbeddingRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
            records.append(_parse_record(obj, lineno))
    return records


@dataclass(frozen=True)
class HybridConfig:
    """Weights plus first-stage and rerank-pool shape for one hybrid run."""

    weights: FusionWeights
    dense_k: int = 1000
    sparse_k: int = 1000
    rerank_pool: str = POOL_DENSE_TOP
    rerank_n: int = 200
    use_dense: bool = True
    use_sparse: bool = True
    use_multivec: bool = True

    def __post_init__(self):
        if self.rerank_pool not in (POOL_DENSE_TOP, POOL_UNION):
            raise ValueError(f"unknown rerank pool {self.rerank_pool!r}")
        if self.dense_k < 1 or self.sparse_k < 1 or self.rerank_n < 1:
            raise ValueError("dense_k, sparse_k and rerank_n must be >= 1")
        if self.rerank_pool == POOL_DENSE_TOP:
            if self.rerank_n > self.dense_k:
                raise ValueError(f"rerank_n {self.rerank_n} exceeds dense_k {self.dense_k}")
            if not self.use_dense:
                raise ValueError("dense_top pool needs the dense method enabled")
        if self.rerank_pool == POOL_UNION and not (self.use_dense or self.use_sparse):
            raise ValueError("union pool needs dense or sparse enabled")
        w = self.weights.as_tuple()
        for enabled, w_m, name in zip(
            (self.use_dense, self.use_sparse, self.use_multivec), w, ("dense", "sparse", "multivec")
        ):
            if not enabled and w_m != 0.0:
                raise ValueError(f"method {name} is disabled but has weight {w_m}")


PRESETS: Dict[str, HybridConfig] = {
    "miracl_all": HybridConfig(weights=FusionWeights(1.0, 0.3, 1.0), rerank_pool=POOL_DENSE_TOP),
    "miracl_ds": HybridConfig(
        weights=FusionWeights(1.0, 0.3, 0.0), rerank_pool=POOL_UNION, use_multivec=False
    ),
    "mldr_ds": HybridConfig(
        weights=FusionWeights(0.2, 0.8, 0.0), rerank_pool=POOL_UNION, use_multivec=False
    ),
    "mldr_all": HybridConfig(weights=FusionWeights(0.15, 0.5, 0.35), rerank_pool=POOL_DENSE_TOP),
}


def _lex_components(query_weights: Dict[int, float], index: SparseIndex) -> Dict[str, float]:
    # Mirrors search_sparse's accumulation order so recomputed components
    # are bit-identical to first-stage sparse scores.
    acc: Dict[str, float] = {}
    for term, w_q in query_weights.items():
        if w_q <= 0.0:
            continue
        for doc_id, w_p in index.postings.get(term, ()):
            acc[doc_id] = acc.get(doc_id, 0.0) + w_q * w_p
    return acc


def retrieve_hybrid(
    query: EmbeddingRecord,
    indexes: Tuple[Optional[DenseIndex], Optional[SparseIndex], Optional[MultiVecStore]],
    cfg: HybridConfig,
    k: int,
) -> List[ScoredHit]:
    """Fused top-k over the configured rerank pool.

    Indexes are positional (dense, sparse, multivec); an index may be
    None when neither the pool nor a nonzero weight needs its method.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    dense_idx, sparse_idx, mv_store = indexes
    w1, w2, w3 = cfg.weights.as_tuple()

    stage_dense = cfg.use_dense
    stage_sparse = cfg.use_sparse and cfg.rerank_pool == POOL_UNION
    score_dense = cfg.use_dense and w1 != 0.0
    score_sparse = cfg.use_sparse and w2 != 0.0
    score_mul = cfg.use_multivec and w3 != 0.0

    if (stage_dense or score_dense) and query.dense is None:
        raise MissingRepresentation("query lacks the dense representation")
    if (stage_sparse or score_sparse) and query.sparse is None:
        raise MissingRepresentation("query lacks the sparse representation")
    if score_mul and query.multivec is None:
        raise MissingRepresentation("query lacks the multivec representation")
    if (stage_dense or score_dense) and dense_idx is None:
        raise MissingRepresentation("dense index required but not given")
    if (stage_sparse or score_sparse) and sparse_idx is None:
        raise MissingRepresentation("sparse index required but not given")
    if score_mul and mv_store is None:
        raise MissingRepresentation("multivec store required but not given")

    e_q = DenseEmbedding(query.dense) if query.dense is not None and dense_idx is not None else None
    dense_hits = search_dense(dense_idx, e_q, cfg.dense_k) if stage_dense else []
    sparse_hits = (
        search_sparse(sparse_idx, TermWeightVector(query.sparse), cfg.sparse_k) if stage_sparse else []
    )

    if cfg.rerank_pool == POOL_DENSE_TOP:
        pool = [h.doc_id for h in dense_hits[: cfg.rerank_n]]
    else:
        seen: Set[str] = set()
        pool = []
        for h in dense_hits + sparse_hits:
            if h.doc_id not in seen:
                seen.add(h.doc_id)
                pool.append(h.doc_id)
    if not pool:
        return []

    if score_dense:
        rows = {doc_id: i for i, (doc_id, _) in enumerate(dense_idx.entries)}
        all_dense = dense_idx._matrix @ e_q.values
        comp_d = {doc_id: float(all_dense[rows[doc_id]]) for doc_id in pool}
    else:
        comp_d = {doc_id: 0.0 for doc_id in pool}
    if score_sparse:
        acc = _lex_components(query.sparse, sparse_idx)
        comp_l = {doc_id: acc.get(doc_id, 0.0) for doc_id in pool}
    else:
        comp_l = {doc_id: 0.0 for doc_id in pool}
    if score_mul:
        q_mv = MultiVectorEmbedding(query.multivec)
        comp_m = {}
        for doc_id in pool:
            mv = mv_store.entries.get(doc_id)
            if mv is None:
                raise UnknownDoc(f"pool doc id {doc_id!r} not in the multivec store")
            comp_m[doc_id] = s_mul(q_mv, mv)
    else:
        comp_m = {doc_id: 0.0 for doc_id in pool}

    components = {d: (comp_d[d], comp_l[d], comp_m[d]) for d in pool}
    fused = [(d, weighted_score(comp_d[d], comp_l[d], comp_m[d], cfg.weights)) for d in pool]
    return ranked_hits(fused, k, components=components)


def mine_hard_negatives(
    query: EmbeddingRecord,
    positives: Set[str],
    index: DenseIndex,
    n: int,
) -> List[str]:
    """Top n dense-ranked doc ids that are not positives (ANCE style)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if query.dense is None:
        raise MissingRepresentation("query lacks the dense representation")
    hits = search_dense(index, DenseEmbedding(query.dense), len(index))
    out = [h.doc_id for h in hits if h.doc_id not in positives]
    return out[:n]
