"""Seeded synthetic corpora with complementary dense and lexical signals.

Term-id space is split into three bands: a common band (bottom 97%)
that document bodies draw from under a Zipf profile, a filler band
(next 2%) used only by lexical queries, and a marker band (top 1%).
Every lexical query owns marker terms that appear in exactly its
relevant document and nowhere else; the rest of the query is filler,
so term overlap with any other document is empty by construction.
Dense queries are noisy token subsets of their relevant document and
never contain markers. When encoder params are supplied, the subset is
drawn from body tokens whose lexical projection clamps to zero weight:
the query then scores exactly zero against every document in the term
channel while the dense channel still sees the full token identity.
Replacement noise is sampled from one other document's body under the
same filter, so it cannot leak term overlap either. Complementarity is
constructive in both directions: marker queries are invisible to the
dense channel by disjointness, subset queries to the term channel by
the weight clamp.

When the spec carries encoder params, marker candidates are screened
per position slot so their term weight under that encoder is strictly
positive on both the query and the document side; the lexical rank-1
guarantee for marker queries is then constructive, not statistical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidSpec
from .toy_encoder import ToyEncoderParams, encode

__all__ = ["SynthSpec", "generate"]

ZIPF_EXPONENT = 1.05
MIN_DOC_LEN = 6
MAX_DOC_LEN = 8191
MAX_DENSE_QUERY_LEN = 64

Corpus = Tuple[
    List[Tuple[str, List[int]]],  # documents
    List[Tuple[str, List[int]]],  # queries
    Dict[str, Dict[str, int]],  # qrels
]


@dataclass(frozen=True)
class SynthSpec:
    n_docs: int
    n_queries: int
    vocab_size: int
    length_mu: float = 3.4
    length_sigma: float = 0.4
    fraction_lexical: float = 0.5
    seed: int = 0
    # None disables marker screening; rank-1 guarantees then depend on luck.
    encoder: Optional[ToyEncoderParams] = None
    marker_count: int = 3
    filler_count: int = 1
    subset_fraction: float = 0.8
    noise_fraction: float = 0.2
    screen_margin: float = 0.05

    def __post_init__(self):
        if self.n_docs < 1 or self.n_queries < 1 or self.vocab_size < 1:
            raise InvalidSpec("n_docs, n_queries and vocab_size must be >= 1")
        if not 0.0 <= self.fraction_lexical <= 1.0:
            raise InvalidSpec(f"fraction_lexical {self.fraction_lexical} outside [0, 1]")
        if self.n_queries > self.n_docs:
            raise InvalidSpec("need one distinct relevant doc per query")
        if self.marker_count < 1 or self.filler_count < 1:
            raise InvalidSpec("marker_count and filler_count must be >= 1")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise InvalidSpec(f"subset_fraction {self.subset_fraction} outside (0, 1]")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise InvalidSpec(f"noise_fraction {self.noise_fraction} outside [0, 1]")
        if self.length_sigma < 0.0:
            raise InvalidSpec("length_sigma must be >= 0")


def _bands(spec: SynthSpec) -> Tuple[int, int]:
    """(filler_lo, marker_lo): common=[0,f), filler=[f,m), marker=[m,V)."""
    marker_lo = spec.vocab_size - max(1, spec.vocab_size // 100)
    filler_lo = marker_lo - max(spec.filler_count, spec.vocab_size // 50)
    n_lex = round(spec.fraction_lexical * spec.n_queries)
    if filler_lo < 16:
        raise InvalidSpec(f"vocab_size {spec.vocab_size} leaves no common band")
    if n_lex > 0 and spec.vocab_size - marker_lo < n_lex * spec.marker_count:
        raise InvalidSpec(
            f"marker band holds {spec.vocab_size - marker_lo} terms, "
            f"{n_lex * spec.marker_count} exclusive markers needed"
        )
    return filler_lo, marker_lo


def _rng(spec: SynthSpec, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((spec.seed & (2**64 - 1), tag)))


def _screened_markers(spec: SynthSpec, marker_lo: int) -> List[List[int]]:
    """Per slot, markers whose encoder weight at that position clears the margin.

    A marker always sits at the same position slot in both its query and
    its document, so screening at exactly that position makes the weight
    it will receive there known in advance. Slot lists are sorted by
    weight descending; allocation later keeps markers globally unique.
    """
    band = range(marker_lo, spec.vocab_size)
    if spec.encoder is None:
        # no screening possible; hand every slot the raw band
        return [list(band) for _ in range(spec.marker_count)]
    pad = 0  # any common-band token; hidden states are per-position, so
    # the pad prefix only shifts the probe to the right slot
    slots: List[List[int]] = []
    for i in range(spec.marker_count):
        scored = []
        for m in band:
            enc = encode([pad] * i + [m], spec.encoder)
            w = enc.term_weights.entries.get(m, 0.0)
            if w > spec.screen_margin:
                scored.append((-w, m))
        scored.sort()
        slots.append([m for _, m in scored])
    return slots


def _allocate_markers(spec: SynthSpec, slots: List[List[int]], n_lex: int) -> List[List[int]]:
    """n_lex rows of marker_count globally-distinct markers, or InvalidSpec."""
    used: set = set()
    per_slot: List[List[int]] = []
    for i, candidates in enumerate(slots):
        chosen = []
        for m in candidates:
            if m not in used:
                used.add(m)
                chosen.append(m)
            if len(chosen) == n_lex:
                break
        if len(chosen) < n_lex:
            raise InvalidSpec(
                f"slot {i}: only {len(chosen)} usable marker terms for {n_lex} lexical "
                f"queries; raise vocab_size or lower screen_margin"
            )
        per_slot.append(chosen)
    return [[per_slot[i][q] for i in range(spec.marker_count)] for q in range(n_lex)]


def generate(spec: SynthSpec) -> Corpus:
    """Deterministic (documents, queries, qrels) for the spec's seed."""
    filler_lo, marker_lo = _bands(spec)
    n_lex = round(spec.fraction_lexical * spec.n_queries)

    ranks = np.arange(1, filler_lo + 1, dtype=np.float64)
    zipf = ranks**-ZIPF_EXPONENT
    zipf /= zipf.sum()

    lengths = np.clip(
        np.rint(_rng(spec, 0).lognormal(spec.length_mu, spec.length_sigma, spec.n_docs)),
        MIN_DOC_LEN,
        MAX_DOC_LEN,
    ).astype(int)
    flat = _rng(spec, 1).choice(filler_lo, size=int(lengths.sum()), p=zipf)
    bodies: List[List[int]] = []
    pos = 0
    for n in lengths:
        bodies.append(flat[pos : pos + n].tolist())
        pos += n

    rel_rows = _rng(spec, 2).permutation(spec.n_docs)[: spec.n_queries]
    is_lexical = np.zeros(spec.n_queries, dtype=bool)
    is_lexical[:n_lex] = True
    _rng(spec, 3).shuffle(is_lexical)

    markers = _allocate_markers(spec, _screened_markers(spec, marker_lo), n_lex) if n_lex else []

    doc_tokens: List[List[int]] = [list(b) for b in bodies]
    queries: List[Tuple[str, List[int]]] = []
    qrels: Dict[str, Dict[str, int]] = {}
    filler_rng = _rng(spec, 4)
    subset_rng = _rng(spec, 5)
    noise_rng = _rng(spec, 6)
    lex_cursor = 0

    weight_cache: Dict[int, float] = {}

    def sparse_weight(term: int) -> float:
        # single-token probe; position-independent when positional_blend is 0
        if term not in weight_cache:
            weight_cache[term] = encode([term], spec.encoder).term_weights.entries.get(
                term, 0.0
            )
        return weight_cache[term]

    def invisible(toks: Sequence[int]) -> List[int]:
        """Indices of tokens the term channel scores as exactly zero."""
        if spec.encoder is None:
            return list(range(len(toks)))
        hits = [i for i, t in enumerate(toks) if sparse_weight(t) == 0.0]
        return hits if hits else list(range(len(toks)))

    for qi in range(spec.n_queries):
        qid = f"q{qi:04d}"
        row = int(rel_rows[qi])
        doc_id = f"d{row:05d}"
        if is_lexical[qi]:
            q_markers = markers[lex_cursor]
            lex_cursor += 1
            doc_tokens[row] = list(q_markers) + doc_tokens[row]
            fillers = filler_rng.integers(filler_lo, marker_lo, size=spec.filler_count)
            q_toks = list(q_markers) + [int(t) for t in fillers]
        else:
            body = doc_tokens[row]
            usable = invisible(body)
            size = min(MAX_DENSE_QUERY_LEN, max(3, round(spec.subset_fraction * len(usable))))
            size = min(size, len(usable))
            picked = np.sort(subset_rng.choice(len(usable), size=size, replace=False))
            q_toks = [body[usable[i]] for i in picked]
            n_noise = round(spec.noise_fraction * size)
            if n_noise:
                where = noise_rng.choice(size, size=n_noise, replace=False)
                if spec.n_docs > 1:
                    other = int(noise_rng.integers(spec.n_docs - 1))
                    if other >= row:
                        other += 1
                    pool = [bodies[other][i] for i in invisible(bodies[other])]
                    noise = [pool[int(i)] for i in noise_rng.integers(len(pool), size=n_noise)]
                else:
                    noise = noise_rng.choice(filler_lo, size=n_noise, p=zipf).tolist()
                for j, t in zip(where, noise):
                    q_toks[int(j)] = int(t)
        queries.append((qid, q_toks))
        qrels[qid] = {doc_id: 1}

    docs = [(f"d{i:05d}", toks) for i, toks in enumerate(doc_tokens)]
    return docs, queries, qrels
