"""The three relevance functions and their weighted fusion."""

from __future__ import annotations

import math

import numpy as np

from .core import DenseEmbedding, FusionWeights, MultiVectorEmbedding, TermWeightVector, dot
from .errors import DimensionMismatch, NonFinite


def s_dense(e_q: DenseEmbedding, e_p: DenseEmbedding) -> float:
    """Inner product of the two pooled embeddings."""
    return dot(e_q, e_p)


def s_lex(q: TermWeightVector, p: TermWeightVector) -> float:
    """Sum over co-occurring terms of the product of their weights."""
    a, b = q.entries, p.entries
    if len(b) < len(a):
        a, b = b, a
    return float(sum(w * b[t] for t, w in a.items() if t in b))


def s_mul(eq: MultiVectorEmbedding, ep: MultiVectorEmbedding) -> float:
    """Late interaction: mean over query rows of the best passage-row dot."""
    if eq.dim != ep.dim:
        raise DimensionMismatch(f"row dims differ: {eq.dim} vs {ep.dim}")
    sims = eq.rows.astype(np.float64, copy=False) @ ep.rows.astype(np.float64, copy=False).T
    return float(sims.max(axis=1).mean())


def weighted_score(s_d: float, s_l: float, s_m: float, w: FusionWeights) -> float:
    """w1*s_d + w2*s_l + w3*s_m."""
    if not all(math.isfinite(s) for s in (s_d, s_l, s_m)):
        raise NonFinite(f"component scores must be finite, got {(s_d, s_l, s_m)}")
    return w.w_dense * s_d + w.w_lex * s_l + w.w_mul * s_m
