import numpy as np
import pytest

from tri_retrieve import (
    DimensionMismatch,
    DuplicateDoc,
    ParseError,
    build_dense,
    load_dense,
    save_dense,
    search_dense,
)
from tri_retrieve.core import DenseEmbedding

from conftest import unit


def corpus(rng, n, d):
    return [(f"d{i:04d}", DenseEmbedding(unit(rng, d))) for i in range(n)]


def brute_force(docs, q, k):
    scored = sorted(
        ((-float(e.values @ q.values), doc_id) for doc_id, e in docs),
    )
    return [(doc_id, -neg) for neg, doc_id in scored[:k]]


def test_build_holds_inputs(rng):
    docs = corpus(rng, 3, 8)
    idx = build_dense(docs)
    assert len(idx.entries) == 3
    assert idx.dim == 8


def test_duplicate_doc_rejected(rng):
    docs = corpus(rng, 2, 8)
    with pytest.raises(DuplicateDoc):
        build_dense(docs + [docs[0]])


def test_dimension_mismatch_rejected(rng):
    docs = corpus(rng, 2, 8) + [("odd", DenseEmbedding(unit(rng, 9)))]
    with pytest.raises(DimensionMismatch):
        build_dense(docs)


def test_stored_vector_found_first(rng):
    docs = corpus(rng, 50, 16)
    idx = build_dense(docs)
    hits = search_dense(idx, docs[17][1], 5)
    assert hits[0].doc_id == docs[17][0]
    assert abs(hits[0].score - 1.0) < 1e-6


def test_k_beyond_corpus_returns_all(rng):
    docs = corpus(rng, 7, 8)
    hits = search_dense(build_dense(docs), DenseEmbedding(unit(rng, 8)), 100)
    assert len(hits) == 7
    keys = [(-h.score, h.doc_id) for h in hits]
    assert keys == sorted(keys)


def test_query_dimension_checked(rng):
    idx = build_dense(corpus(rng, 3, 8))
    with pytest.raises(DimensionMismatch):
        search_dense(idx, DenseEmbedding(unit(rng, 4)), 2)


def test_tied_scores_order_by_doc_id(rng):
    v = DenseEmbedding(unit(rng, 8))
    docs = [("z", v), ("a", v), ("m", v)]
    hits = search_dense(build_dense(docs), v, 3)
    assert [h.doc_id for h in hits] == ["a", "m", "z"]


def test_prefix_property(rng):
    docs = corpus(rng, 200, 16)
    idx = build_dense(docs)
    q = DenseEmbedding(unit(rng, 16))
    for k in (1, 3, 10, 50):
        small = search_dense(idx, q, k)
        big = search_dense(idx, q, k + 1)
        assert [(h.doc_id, h.score) for h in big][: len(small)] == [
            (h.doc_id, h.score) for h in small
        ]


def test_matches_brute_force(rng):
    for trial in range(5):
        docs = corpus(rng, 300, 32)
        idx = build_dense(docs)
        q = DenseEmbedding(unit(rng, 32))
        got = search_dense(idx, q, 10)
        ref = brute_force(docs, q, 10)
        assert [h.doc_id for h in got] == [d for d, _ in ref]
        # accumulation order differs from the per-row oracle dot; scores
        # agree to addition reordering noise
        for h, (_, s) in zip(got, ref):
            assert abs(h.score - s) < 1e-12


def test_insertion_order_irrelevant(rng):
    docs = corpus(rng, 40, 8)
    q = DenseEmbedding(unit(rng, 8))
    a = search_dense(build_dense(docs), q, 10)
    b = search_dense(build_dense(list(reversed(docs))), q, 10)
    assert [(h.doc_id, h.score) for h in a] == [(h.doc_id, h.score) for h in b]


def test_save_load_round_trip(rng, tmp_path):
    docs = corpus(rng, 30, 12)
    idx = build_dense(docs)
    path = str(tmp_path / "dense.jsonl")
    save_dense(idx, path)
    loaded = load_dense(path)
    q = DenseEmbedding(unit(rng, 12))
    a = [(h.doc_id, h.score) for h in search_dense(idx, q, 10)]
    b = [(h.doc_id, h.score) for h in search_dense(loaded, q, 10)]
    assert a == b


def test_load_rejects_tampered_file(rng, tmp_path):
    docs = corpus(rng, 5, 8)
    path = str(tmp_path / "dense.jsonl")
    save_dense(build_dense(docs), path)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("\n")
    # appended byte breaks the manifest checksum
    with pytest.raises(ParseError):
        load_dense(path)
