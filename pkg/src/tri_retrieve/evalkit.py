"""Graded-relevance evaluation: nDCG@k, Recall@k, qrels and run files."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

from .errors import ParseError
from .fileio import atomic_write

__all__ = [
    "Qrels",
    "RunData",
    "MetricResult",
    "ndcg_at_k",
    "recall_at_k",
    "read_qrels",
    "write_qrels",
    "read_run",
    "write_run",
]

# qid -> {doc_id -> grade}; grade 0 means judged non-relevant.
Qrels = Dict[str, Dict[str, int]]

# qid -> ranked [(doc_id, score)], best first.
RunData = Dict[str, List[Tuple[str, float]]]


@dataclass(frozen=True)
class MetricResult:
    per_query: Dict[str, float]
    mean: float
    n_skipped: int


def _gain(grade: int) -> float:
    return 2.0**grade - 1.0


def ndcg_at_k(run: RunData, qrels: Qrels, k: int) -> MetricResult:
    """Mean nDCG@k over run queries that have at least one grade >= 1.

    DCG@k = sum over rank i (from 1) of (2^grade - 1)/log2(i + 1); the
    ideal ordering takes the query's judged grades sorted descending.
    Queries without a positive judgment cannot be normalised and are
    skipped, reported in n_skipped.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per_query: Dict[str, float] = {}
    skipped = 0
    for qid, ranking in run.items():
        judged = qrels.get(qid, {})
        ideal_grades = sorted(judged.values(), reverse=True)[:k]
        idcg = sum(_gain(g) / math.log2(i + 1) for i, g in enumerate(ideal_grades, start=1))
        if idcg <= 0.0:
            skipped += 1
            continue
        dcg = sum(
            _gain(judged.get(doc_id, 0)) / math.log2(i + 1)
            for i, (doc_id, _) in enumerate(ranking[:k], start=1)
        )
        per_query[qid] = dcg / idcg
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return MetricResult(per_query=per_query, mean=mean, n_skipped=skipped)


def recall_at_k(run: RunData, qrels: Qrels, k: int) -> MetricResult:
    """Fraction of grade >= 1 docs found in the top k, averaged as ndcg_at_k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per_query: Dict[str, float] = {}
    skipped = 0
    for qid, ranking in run.items():
        relevant = {d for d, g in qrels.get(qid, {}).items() if g >= 1}
        if not relevant:
            skipped += 1
            continue
        top = {doc_id for doc_id, _ in ranking[:k]}
        per_query[qid] = len(relevant & top) / len(relevant)
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return MetricResult(per_query=per_query, mean=mean, n_skipped=skipped)


def read_qrels(path: str) -> Qrels:
    """Parse `qid 0 doc_id grade` lines (whitespace-delimited)."""
    qrels: Qrels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields, got {len(parts)}", line=lineno)
            qid, _, doc_id, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError:
                raise ParseError(f"grade {grade_s!r} is not an integer", line=lineno) from None
            if grade < 0:
                raise ParseError(f"grade must be >= 0, got {grade}", line=lineno)
            bucket = qrels.setdefault(qid, {})
            if doc_id in bucket:
                raise ParseError(f"duplicate judgment for ({qid}, {doc_id})", line=lineno)
            bucket[doc_id] = grade
    return qrels


def write_qrels(qrels: Qrels, path: str) -> None:
    with atomic_write(path) as fh:
        for qid in sorted(qrels):
            for doc_id in sorted(qrels[qid]):
                fh.write(f"{qid} 0 {doc_id} {qrels[qid][doc_id]}\n")


def write_run(run: RunData, path: str, tag: str) -> None:
    """Write `qid Q0 doc_id rank score tag` lines, ranks from 1."""
    if not tag or any(c.isspace() for c in tag):
        raise ValueError(f"tag must be non-empty without whitespace, got {tag!r}")
    with atomic_write(path) as fh:
        for qid in run:
            for rank, (doc_id, score) in enumerate(run[qid], start=1):
                fh.write(f"{qid} Q0 {doc_id} {rank} {score!r} {tag}\n")


def read_run(path: str) -> RunData:
    """Inverse of write_run; rankings are ordered by the rank field."""
    rows: Dict[str, List[Tuple[int, str, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ParseError(f"expected 6 fields, got {len(parts)}", line=lineno)
            qid, marker, doc_id, rank_s, score_s, _tag = parts
            if marker != "Q0":
                raise ParseError(f"second field must be Q0, got {marker!r}", line=lineno)
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise ParseError(f"bad rank/score pair {rank_s!r} {score_s!r}", line=lineno) from None
            if rank < 1:
                raise ParseError(f"rank must be >= 1, got {rank}", line=lineno)
            rows.setdefault(qid, []).append((rank, doc_id, score))
    run: RunData = {}
    for qid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        if [r for r, _, _ in entries] != list(range(1, len(entries) + 1)):
            raise ParseError(f"ranks for query {qid!r} are not 1..n")
        run[qid] = [(doc_id, score) for _, doc_id, score in entries]
    return run
