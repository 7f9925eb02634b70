"""Shared numeric primitives and the domain types every other module consumes.

All similarity math runs in 64-bit floats regardless of how vectors are
stored; every result list in the package obeys one ordering contract:
score descending, ties broken by ascending doc_id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from .errors import DegenerateVector, DimensionMismatch, NonFinite

NORM_TOL = 1e-6


def _as_f64(v) -> np.ndarray:
    if isinstance(v, DenseEmbedding):
        return v.values
    return np.asarray(v, dtype=np.float64)


def normalize(v) -> "DenseEmbedding":
    """Scale v to unit Euclidean norm and wrap it as a DenseEmbedding.

    Raises DegenerateVector on a zero vector or any non-finite entry.
    """
    arr = _as_f64(v)
    if arr.ndim != 1 or arr.size < 1:
        raise DegenerateVector(f"expected a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateVector("vector has non-finite entries")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DegenerateVector("zero vector cannot be normalized")
    return DenseEmbedding(arr / norm)


def dot(a, b) -> float:
    """Inner product of two equal-length real vectors, in float64."""
    va, vb = _as_f64(a), _as_f64(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"vector lengths differ: {va.shape} vs {vb.shape}")
    return float(np.dot(va, vb))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DenseEmbedding:
    """Unit-norm real vector of dimension d."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise DegenerateVector(f"embedding must be a non-empty 1-d vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DegenerateVector("embedding has non-finite entries")
        if abs(float(np.linalg.norm(arr)) - 1.0) > NORM_TOL:
            raise DegenerateVector("embedding is not unit-norm; construct via normalize()")
        object.__setattr__(self, "values", _readonly(arr))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class TermWeightVector:
    """Sparse map term-id -> non-negative weight, one entry per term."""

    entries: dict

    def __post_init__(self):
        for term, weight in self.entries.items():
            if not isinstance(term, (int, np.integer)) or term < 0:
                raise ValueError(f"term ids must be non-negative integers, got {term!r}")
            if not np.isfinite(weight) or weight < 0:
                raise NonFinite(f"weight for term {term} must be finite and >= 0, got {weight!r}")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class MultiVectorEmbedding:
    """Row-normalized matrix, one row per token."""

    rows: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.rows)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise DegenerateVector(f"expected a non-empty 2-d matrix, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise DegenerateVector("matrix has non-finite entries")
        norms = np.linalg.norm(mat.astype(np.float64, copy=False), axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise DegenerateVector("every row must be unit-norm")
        object.__setattr__(self, "rows", _readonly(mat))

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])


@dataclass(frozen=True)
class FusionWeights:
    """Weights (w_dense, w_lex, w_mul) of the fused relevance score."""

    w_dense: float
    w_lex: float
    w_mul: float

    def __post_init__(self):
        ws = (self.w_dense, self.w_lex, self.w_mul)
        if not all(np.isfinite(w) for w in ws):
            raise NonFinite(f"fusion weights must be finite, got {ws}")
        if all(w == 0 for w in ws):
            raise NonFinite("at least one fusion weight must be nonzero")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.w_dense, self.w_lex, self.w_mul)


@dataclass(frozen=True)
class ScoredHit:
    """One retrieved document with its (possibly fused) score.

    components, when present, is the (s_dense, s_lex, s_mul) triple behind
    a fused score.
    """

    doc_id: str
    score: float
    components: Optional[Tuple[float, float, float]] = None


def ranked_hits(
    pairs: Iterable[Tuple[str, float]],
    k: Optional[int] = None,
    components: Optional[dict] = None,
) -> list:
    """Sort (doc_id, score) pairs into the global ScoredHit contract.

    Score descending, ties by ascending doc_id; truncated to k when given.
    components maps doc_id -> (s_dense, s_lex, s_mul).
    """
    ordered = sorted(pairs, key=lambda p: (-p[1], p[0]))
    if k is not None:
        ordered = ordered[:k]
    if components is None:
        return [ScoredHit(doc_id, float(score)) for doc_id, score in ordered]
    return [
        ScoredHit(doc_id, float(score), components.get(doc_id))
        for doc_id, score in ordered
    ]
