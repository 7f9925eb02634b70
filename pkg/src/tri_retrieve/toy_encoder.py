"""Deterministic, seeded pseudo-encoder.

Produces dense / term-weight / multi-vector representations from integer
token-id sequences so that every pipeline, index, and loss in the package
can be exercised end to end without a neural model. Also implements the
block-CLS aggregation used for long inputs.

=== Randomness contract ===

All pseudo-random draws come from numpy's Philox4x64 counter-based
generator. Each draw is keyed by a 128-bit key built as

    key = (splitmix64(seed XOR stream-constant), index)

where `stream-constant` separates the three vector families (token
vectors, positional vectors, the lexical projection) and `index` is the
token id / position. splitmix64 is a bijection on 64-bit words, so
distinct (seed, stream) pairs can never collide. This makes every vector
a pure function of (seed, index, dim): no call order, caching, or
process boundary can change an output. The generator choice is part of
the package's compatibility contract; changing it invalidates any stored
encodings.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import DenseEmbedding, MultiVectorEmbedding, TermWeightVector, normalize
from .errors import DegenerateVector, EmptyInput, ParseError
from .fileio import atomic_write

_M64 = (1 << 64) - 1

# Stream constants: arbitrary, fixed, pairwise distinct.
_STREAM_TOKEN = 0x746F6B656E730000
_STREAM_POSITION = 0x706F736974696F6E
_STREAM_LEXICAL = 0x6C65786963616C00

DEFAULT_MCLS_INTERVAL = 256


def _splitmix64(x: int) -> int:
    """One splitmix64 step; a bijective 64-bit mixer."""
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


@functools.lru_cache(maxsize=1 << 17)
def _unit_draw(seed: int, stream: int, index: int, dim: int) -> np.ndarray:
    """Unit-norm standard-normal draw for one (seed, stream, index)."""
    key = np.array([_splitmix64((seed & _M64) ^ stream), index & _M64], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    vec = gen.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    vec.flags.writeable = False
    return vec


@dataclass(frozen=True, eq=False)
class ToyEncoderParams:
    """Immutable encoder configuration.

    dim: embedding dimension d.
    seed: master seed for token and positional vectors.
    lexical_projection_seed: seed of the term-importance direction u
        (defaults to `seed`; the streams are independent either way).
    multivec_projection: optional d x d matrix applied to hidden states
        before row normalization; None means identity and skips the
        projection entirely.
    positional_blend: alpha in [0, 1); each hidden state is
        normalize((1-alpha) * token_vector + alpha * position_vector).
    """

    dim: int
    seed: int = 0
    lexical_projection_seed: Optional[int] = None
    multivec_projection: Optional[np.ndarray] = None
    positional_blend: float = 0.25

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if not 0.0 <= self.positional_blend < 1.0:
            raise ValueError(f"positional_blend must be in [0, 1), got {self.positional_blend}")
        if self.lexical_projection_seed is None:
            object.__setattr__(self, "lexical_projection_seed", self.seed)
        if self.multivec_projection is not None:
            proj = np.asarray(self.multivec_projection, dtype=np.float64)
            if proj.shape != (self.dim, self.dim):
                raise ValueError(f"multivec_projection must be {self.dim}x{self.dim}, got {proj.shape}")
            proj = proj.copy()
            proj.flags.writeable = False
            object.__setattr__(self, "multivec_projection", proj)


@dataclass(frozen=True, eq=False)
class EncodedText:
    """All retrieval representations from one encoding pass."""

    cls: DenseEmbedding
    hidden: np.ndarray  # token count x d, rows unit-norm
    term_weights: TermWeightVector
    multivec: MultiVectorEmbedding


def token_vector(token_id: int, params: ToyEncoderParams) -> np.ndarray:
    """Deterministic unit vector standing in for a learned token embedding."""
    if token_id < 0:
        raise ValueError(f"token ids must be >= 0, got {token_id}")
    return _unit_draw(params.seed, _STREAM_TOKEN, int(token_id), params.dim)


def _position_vector(position: int, params: ToyEncoderParams) -> np.ndarray:
    return _unit_draw(params.seed, _STREAM_POSITION, position, params.dim)


def _lexical_direction(params: ToyEncoderParams) -> np.ndarray:
    return _unit_draw(params.lexical_projection_seed, _STREAM_LEXICAL, 0, params.dim)


def _hidden_states(tokens: Sequence[int], params: ToyEncoderParams) -> np.ndarray:
    """Per-token unit vectors: blend of token identity and position."""
    alpha = params.positional_blend
    tok = np.stack([token_vector(t, params) for t in tokens])
    if alpha > 0.0:
        pos = np.stack([_position_vector(i, params) for i in range(len(tokens))])
        blended = (1.0 - alpha) * tok + alpha * pos
    else:
        blended = tok.copy()
    norms = np.linalg.norm(blended, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateVector("token/position blend produced a zero vector")
    return blended / norms[:, None]


def _pool(hidden: np.ndarray) -> DenseEmbedding:
    """Mean of rows, renormalized. One code path for cls and block-CLS."""
    return normalize(hidden.mean(axis=0))


def encode(tokens: Sequence[int], params: ToyEncoderParams) -> EncodedText:
    """Encode a token sequence into all three retrieval representations.

    hidden[i] = normalize((1-alpha) * token_vector(tokens[i]) + alpha * pos_vector(i))
    cls       = normalize(mean of hidden)
    term weight of each occurrence = ReLU(u . hidden[i]); a repeated term
    keeps its maximum occurrence weight. Multi-vector rows are the hidden
    states, optionally projected, row-renormalized.
    """
    if len(tokens) == 0:
        raise EmptyInput("cannot encode an empty token sequence")
    hidden = _hidden_states(tokens, params)
    cls = _pool(hidden)

    occurrence = np.maximum(hidden @ _lexical_direction(params), 0.0)
    weights: dict = {}
    for term, w in zip(tokens, occurrence):
        term = int(term)
        w = float(w)
        if term not in weights or w > weights[term]:
            weights[term] = w

    if params.multivec_projection is None:
        multivec = MultiVectorEmbedding(hidden)
    else:
        projected = hidden @ params.multivec_projection.T
        norms = np.linalg.norm(projected, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateVector("multivec projection produced a zero row")
        multivec = MultiVectorEmbedding(projected / norms[:, None])

    return EncodedText(
        cls=cls,
        hidden=hidden,
        term_weights=TermWeightVector(weights),
        multivec=multivec,
    )


def encode_mcls(
    tokens: Sequence[int],
    params: ToyEncoderParams,
    interval: int = DEFAULT_MCLS_INTERVAL,
) -> DenseEmbedding:
    """Block-CLS aggregation for long inputs.

    Tokens are split into consecutive blocks of `interval`; each block
    contributes one block-CLS (its hidden states pooled as in encode);
    the output is the renormalized mean of the block-CLS vectors. With a
    single block this is exactly encode(...).cls.
    """
    if interval < 1:
        raise ValueError(f"interval must be >= 1, got {interval}")
    if len(tokens) == 0:
        raise EmptyInput("cannot encode an empty token sequence")
    hidden = _hidden_states(tokens, params)
    if len(tokens) <= interval:
        return _pool(hidden)
    block_cls = [
        _pool(hidden[start : start + interval]).values
        for start in range(0, len(tokens), interval)
    ]
    return normalize(np.stack(block_cls).mean(axis=0))


# ---- token file format ----
# One document per line: doc_id, a tab, then whitespace-separated
# non-negative integer token ids.


def write_token_file(docs: Sequence[Tuple[str, Sequence[int]]], path: str) -> None:
    for doc_id, tokens in docs:
        if "\t" in doc_id or "\n" in doc_id or not doc_id:
            raise ValueError(f"doc id unusable in token file: {doc_id!r}")
    with atomic_write(path) as handle:
        for doc_id, tokens in docs:
            handle.write(f"{doc_id}\t{' '.join(str(int(t)) for t in tokens)}\n")


def read_token_file(path: str) -> List[Tuple[str, List[int]]]:
    docs = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ParseError("expected 'doc_id<TAB>token ids'", line=lineno)
            doc_id, _, rest = line.partition("\t")
            if not doc_id:
                raise ParseError("empty doc id", line=lineno)
            fields = rest.split()
            if not fields:
                raise ParseError(f"no tokens for doc {doc_id!r}", line=lineno)
            try:
                tokens = [int(f) for f in fields]
            except ValueError:
                raise ParseError(f"non-integer token id for doc {doc_id!r}", line=lineno) from None
            if any(t < 0 for t in tokens):
                raise ParseError(f"negative token id for doc {doc_id!r}", line=lineno)
            docs.append((doc_id, tokens))
    return docs
