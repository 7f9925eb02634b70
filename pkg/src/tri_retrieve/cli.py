"""Batch command-line surface.

Every subcommand reads and writes files and prints a short structured
summary line; nothing is interactive. Determinism contract: same
config, flags and seed produce byte-identical output files. The
TRI_RETRIEVE_THREADS environment variable caps query parallelism
(results are ordered by input position either way).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .batching import (
    assign_groups,
    default_table,
    padding_stats,
    plan_epoch,
    random_plan_like,
)
from .core import DenseEmbedding, FusionWeights, MultiVectorEmbedding, TermWeightVector
from .corpusgen import SynthSpec, generate
from .dense_index import build_dense, load_dense, save_dense, search_dense
from .distill import (
    CandidateScores,
    LossWeights,
    compute_losses,
    finite_difference_check,
)
from .errors import MissingRepresentation, TriRetrieveError, UnknownDoc
from .evalkit import ndcg_at_k, read_qrels, read_run, recall_at_k, write_qrels, write_run
from .fileio import atomic_write
from .figures import figure_path, metric_figure, padding_figure
from .multivec import MultiVecStore, add_doc, rerank
from .pipeline import (
    POOL_DENSE_TOP,
    POOL_UNION,
    PRESETS,
    EmbeddingRecord,
    HybridConfig,
    ingest_embeddings,
    mine_hard_negatives,
    read_embeddings,
    retrieve_hybrid,
    write_embeddings,
)
from .sparse_index import build_sparse, load_sparse, rank_bm25, save_sparse, search_sparse
from .toy_encoder import (
    DEFAULT_MCLS_INTERVAL,
    ToyEncoderParams,
    encode,
    encode_mcls,
    read_token_file,
    write_token_file,
)

MASK64 = 2**64 - 1


def _threads() -> int:
    raw = os.environ.get("TRI_RETRIEVE_THREADS", "")
    if raw.strip():
        return max(1, int(raw))
    return min(8, os.cpu_count() or 1)


def _map_ordered(fn: Callable, items: Sequence) -> List:
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _load_config(path: Optional[str]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    return cp


def _encoder_params(args, cfg: configparser.ConfigParser) -> ToyEncoderParams:
    dim = getattr(args, "dim", None)
    if dim is None:
        dim = cfg.getint("encoder", "dim", fallback=32)
    blend = cfg.getfloat("encoder", "positional_blend", fallback=0.25)
    lex_seed = None
    if cfg.has_option("encoder", "lexical_projection_seed"):
        lex_seed = cfg.getint("encoder", "lexical_projection_seed")
    return ToyEncoderParams(
        dim=dim, seed=args.seed, lexical_projection_seed=lex_seed, positional_blend=blend
    )


def _triple(text: str) -> Tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric weight in {text!r}") from None


def _need(record: EmbeddingRecord, field: str):
    value = getattr(record, field)
    if value is None:
        raise MissingRepresentation(f"record {record.doc_id!r} has no {field} representation")
    return value


# ---------------------------------------------------------------- commands


def cmd_gen(args, cfg) -> int:
    encoder = _encoder_params(args, cfg) if args.screen_markers else None
    spec = SynthSpec(
        n_docs=args.docs,
        n_queries=args.queries,
        vocab_size=args.vocab,
        length_mu=args.length_mu,
        length_sigma=args.length_sigma,
        fraction_lexical=args.fraction_lexical,
        seed=args.seed,
        encoder=encoder,
    )
    docs, queries, qrels = generate(spec)
    write_token_file(docs, args.out_docs)
    write_token_file(queries, args.out_queries)
    write_qrels(qrels, args.out_qrels)
    print(f"docs={len(docs)} queries={len(queries)} vocab={args.vocab} seed={args.seed}")
    return 0


def cmd_encode(args, cfg) -> int:
    if args.ingest:
        records = ingest_embeddings(args.input)
    else:
        params = _encoder_params(args, cfg)
        texts = read_token_file(args.input)

        def one(item: Tuple[str, List[int]]) -> EmbeddingRecord:
            doc_id, tokens = item
            enc = encode(tokens, params)
            cls = encode_mcls(tokens, params, args.interval) if args.mcls else enc.cls
            return EmbeddingRecord(
                doc_id,
                dense=cls.values,
                sparse=dict(enc.term_weights.entries),
                multivec=enc.multivec.rows,
            )

        records = _map_ordered(one, texts)
    write_embeddings(records, args.output)
    print(f"records={len(records)} out={args.output}")
    return 0


def cmd_index(args, cfg) -> int:
    records = read_embeddings(args.embeddings)
    if args.mode == "dense":
        index = build_dense([(r.doc_id, DenseEmbedding(_need(r, "dense"))) for r in records])
        save_dense(index, args.out)
    elif args.mode == "sparse":
        if not args.tokens:
            raise MissingRepresentation("sparse indexing needs --tokens for lengths and tfs")
        token_docs = dict(read_token_file(args.tokens))
        docs = []
        for r in records:
            tokens = token_docs.get(r.doc_id)
            if tokens is None:
                raise UnknownDoc(f"doc {r.doc_id!r} absent from {args.tokens}")
            tf: dict = {}
            for t in tokens:
                tf[t] = tf.get(t, 0) + 1
            docs.append((r.doc_id, TermWeightVector(_need(r, "sparse")), len(tokens), tf))
        save_sparse(build_sparse(docs), args.out)
    else:
        slimmed = [EmbeddingRecord(r.doc_id, multivec=_need(r, "multivec")) for r in records]
        write_embeddings(slimmed, args.out)
    print(f"mode={args.mode} docs={len(records)} out={args.out}")
    return 0


def _load_store(path: str) -> MultiVecStore:
    records = read_embeddings(path)
    store = MultiVecStore(dim=int(records[0].multivec.shape[1]))
    for r in records:
        add_doc(store, r.doc_id, MultiVectorEmbedding(_need(r, "multivec")))
    return store


def cmd_search(args, cfg) -> int:
    k = args.k
    if args.mode == "bm25":
        index = load_sparse(args.index)
        queries = read_token_file(args.queries)
        rows = _map_ordered(lambda item: (item[0], rank_bm25(index, item[1], k)), queries)
    elif args.mode == "dense":
        index = load_dense(args.index)
        qrecords = read_embeddings(args.queries)
        rows = _map_ordered(
            lambda r: (r.doc_id, search_dense(index, DenseEmbedding(_need(r, "dense")), k)),
            qrecords,
        )
    elif args.mode == "sparse":
        index = load_sparse(args.index)
        qrecords = read_embeddings(args.queries)
        rows = _map_ordered(
            lambda r: (r.doc_id, search_sparse(index, TermWeightVector(_need(r, "sparse")), k)),
            qrecords,
        )
    else:
        store = _load_store(args.index)
        candidates = sorted(store.entries)
        qrecords = read_embeddings(args.queries)
        rows = _map_ordered(
            lambda r: (
                r.doc_id,
                rerank(store, MultiVectorEmbedding(_need(r, "multivec")), candidates, k),
            ),
            qrecords,
        )
    run = {qid: [(h.doc_id, h.score) for h in hits] for qid, hits in rows}
    write_run(run, args.out, args.tag)
    print(f"mode={args.mode} queries={len(run)} k={k} out={args.out}")
    return 0


def _hybrid_config(args, cfg) -> HybridConfig:
    preset = args.preset or cfg.get("fusion", "preset", fallback=None)
    if args.weights is None and preset is None:
        raise MissingRepresentation("hybrid needs --preset or --weights")
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        hc = PRESETS[preset]
        overrides = {}
        if args.weights is not None:
            overrides["weights"] = FusionWeights(*args.weights)
        if args.pool is not None:
            overrides["rerank_pool"] = args.pool
        if args.dense_k is not None:
            overrides["dense_k"] = args.dense_k
        if args.sparse_k is not None:
            overrides["sparse_k"] = args.sparse_k
        if args.rerank_n is not None:
            overrides["rerank_n"] = args.rerank_n
        return dataclasses.replace(hc, **overrides) if overrides else hc
    w1, w2, w3 = args.weights
    pool = args.pool or POOL_DENSE_TOP
    return HybridConfig(
        weights=FusionWeights(w1, w2, w3),
        dense_k=args.dense_k or 1000,
        sparse_k=args.sparse_k or 1000,
        rerank_pool=pool,
        rerank_n=args.rerank_n or 200,
        use_dense=True,
        use_sparse=(pool == POOL_UNION) or w2 != 0.0,
        use_multivec=w3 != 0.0,
    )


def cmd_hybrid(args, cfg) -> int:
    hc = _hybrid_config(args, cfg)
    w1, w2, w3 = hc.weights.as_tuple()
    dense_idx = load_dense(args.dense_index)
    sparse_needed = hc.use_sparse and (hc.rerank_pool == POOL_UNION or w2 != 0.0)
    mul_needed = hc.use_multivec and w3 != 0.0
    if sparse_needed and not args.sparse_index:
        raise MissingRepresentation("this hybrid config needs --sparse-index")
    if mul_needed and not args.multivec_index:
        raise MissingRepresentation("this hybrid config needs --multivec-index")
    sparse_idx = load_sparse(args.sparse_index) if sparse_needed else None
    store = _load_store(args.multivec_index) if mul_needed else None
    qrecords = read_embeddings(args.queries)
    indexes = (dense_idx, sparse_idx, store)
    rows = _map_ordered(
        lambda r: (r.doc_id, retrieve_hybrid(r, indexes, hc, args.k)), qrecords
    )
    run = {qid: [(h.doc_id, h.score) for h in hits] for qid, hits in rows}
    write_run(run, args.out, args.tag)
    print(f"pool={hc.rerank_pool} weights=({w1},{w2},{w3}) queries={len(run)} out={args.out}")
    return 0


def cmd_eval(args, cfg) -> int:
    run = read_run(args.run)
    qrels = read_qrels(args.qrels)
    metric = ndcg_at_k if args.metric == "ndcg" else recall_at_k
    result = metric(run, qrels, args.k)
    label = f"{args.metric}@{args.k}"
    print(f"{label}={result.mean:.6f}")
    if result.n_skipped:
        print(f"skipped={result.n_skipped}")
    if args.report:
        with atomic_write(args.report) as fh:
            fh.write(f"qid\t{label}\n")
            for qid in sorted(result.per_query):
                fh.write(f"{qid}\t{result.per_query[qid]:.6f}\n")
            fh.write(f"__mean__\t{result.mean:.6f}\n")
        metric_figure(result.per_query, result.mean, label, figure_path(args.report))
    return 0


def cmd_distill_check(args, cfg) -> int:
    rng = np.random.default_rng(np.random.SeedSequence((args.seed & MASK64, 11)))
    lw = LossWeights(
        w=FusionWeights(*args.weights),
        lambda_dense=args.lambdas[0],
        lambda_lex=args.lambdas[1],
        lambda_mul=args.lambdas[2],
    )
    for b in range(args.batches):
        scores = rng.normal(0.0, 1.0, (3, args.length))
        cs = CandidateScores(
            dense=scores[0],
            lex=scores[1],
            mul=scores[2],
            target_index=int(rng.integers(args.length)),
            temperature=args.tau,
        )
        bd = compute_losses(cs, lw)
        fd = finite_difference_check(cs, lw)
        fields = " ".join(
            f"{name}={getattr(bd, name):.12g}"
            for name in (
                "L_dense",
                "L_lex",
                "L_mul",
                "L_inter",
                "L",
                "Lp_dense",
                "Lp_lex",
                "Lp_mul",
                "Lp",
                "L_final",
            )
        )
        print(f"batch={b} n={args.length} {fields} fd_rel_err={fd:.3e}")
    return 0


def cmd_bench_batching(args, cfg) -> int:
    rng = np.random.default_rng(np.random.SeedSequence((args.seed & MASK64, 13)))
    lengths = np.clip(
        np.rint(rng.lognormal(args.length_mu, args.length_sigma, args.docs)), 1, 8191
    ).astype(int)
    length_of = {f"d{i:05d}": int(n) for i, n in enumerate(lengths)}
    table = default_table(args.stage, args.divisor)
    groups = assign_groups(length_of, table)
    plans = plan_epoch(groups, table, args.seed, args.workers)
    merged = [
        [doc for plan in plans for doc in plan.batches[step][1]]
        for step in range(len(plans[0].batches))
    ]
    if not merged:
        print("n_docs=%d n_batches=0 grouped_fraction=0.000000 random_fraction=0.000000 ratio=1.0000" % args.docs)
        return 0
    grouped = padding_stats([[length_of[d] for d in b] for b in merged])
    baseline = random_plan_like(merged, args.seed)
    randomized = padding_stats([[length_of[d] for d in b] for b in baseline])
    if randomized.padding_fraction > 0.0:
        ratio = grouped.padding_fraction / randomized.padding_fraction
    else:
        ratio = 1.0 if grouped.padding_fraction == 0.0 else float("inf")
    print(
        f"n_docs={args.docs} n_batches={len(merged)} "
        f"grouped_fraction={grouped.padding_fraction:.6f} "
        f"random_fraction={randomized.padding_fraction:.6f} ratio={ratio:.4f}"
    )
    if args.report:
        per_group: dict = {}
        for step, batch in enumerate(merged):
            g = plans[0].batches[step][0]
            per_group.setdefault(g, []).append([length_of[d] for d in batch])
        rows = []
        for g in sorted(per_group):
            stats = padding_stats(per_group[g])
            lo, hi = table.boundaries[g]
            rows.append((g, lo, hi, sum(len(b) for b in per_group[g]), len(per_group[g]), stats.padding_fraction))
        with atomic_write(args.report) as fh:
            fh.write("group\tlo\thi\tdocs\tbatches\tpadding_fraction\n")
            for g, lo, hi, nd, nb, frac in rows:
                fh.write(f"{g}\t{lo}\t{hi}\t{nd}\t{nb}\t{frac:.6f}\n")
        padding_figure(
            grouped.padding_fraction,
            randomized.padding_fraction,
            [r[5] for r in rows],
            figure_path(args.report),
        )
    return 0


def cmd_mine_negatives(args, cfg) -> int:
    index = load_dense(args.index)
    qrecords = read_embeddings(args.queries)
    qrels = read_qrels(args.qrels)
    total = 0
    with atomic_write(args.out) as fh:
        for r in qrecords:
            positives = {d for d, g in qrels.get(r.doc_id, {}).items() if g >= 1}
            for neg in mine_hard_negatives(r, positives, index, args.n):
                fh.write(f"{r.doc_id}\t{neg}\n")
                total += 1
    print(f"queries={len(qrecords)} negatives={total} out={args.out}")
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; flags win over it")
    common.add_argument("--seed", type=int, default=0, help="single source of randomness")

    p = argparse.ArgumentParser(prog="tri-retrieve", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic corpus")
    g.add_argument("--docs", type=int, required=True)
    g.add_argument("--queries", type=int, required=True)
    g.add_argument("--vocab", type=int, default=30000)
    g.add_argument("--fraction-lexical", type=float, default=0.5)
    g.add_argument("--length-mu", type=float, default=3.4)
    g.add_argument("--length-sigma", type=float, default=0.4)
    g.add_argument("--dim", type=int, default=None, help="encoder dim used for marker screening")
    g.add_argument("--no-screen-markers", dest="screen_markers", action="store_false")
    g.add_argument("--out-docs", required=True)
    g.add_argument("--out-queries", required=True)
    g.add_argument("--out-qrels", required=True)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("encode", parents=[common], help="token file -> embeddings file")
    e.add_argument("--input", required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--dim", type=int, default=None)
    e.add_argument("--mcls", action="store_true", help="block-CLS dense pooling for long docs")
    e.add_argument("--interval", type=int, default=DEFAULT_MCLS_INTERVAL)
    e.add_argument("--ingest", action="store_true", help="input is already an embeddings file")
    e.set_defaults(func=cmd_encode)

    i = sub.add_parser("index", parents=[common], help="build a retrieval index")
    i.add_argument("--mode", choices=["dense", "sparse", "multivec"], required=True)
    i.add_argument("--embeddings", required=True)
    i.add_argument("--tokens", help="token file (sparse mode: lengths and term frequencies)")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_index)

    s = sub.add_parser("search", parents=[common], help="single-method retrieval")
    s.add_argument("--mode", choices=["dense", "sparse", "multivec", "bm25"], required=True)
    s.add_argument("--index", required=True)
    s.add_argument("--queries", required=True, help="embeddings file; token file for bm25")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--tag", default="tri")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    h = sub.add_parser("hybrid", parents=[common], help="fused retrieval over a rerank pool")
    h.add_argument("--dense-index", required=True)
    h.add_argument("--sparse-index")
    h.add_argument("--multivec-index")
    h.add_argument("--queries", required=True)
    h.add_argument("--preset", choices=sorted(PRESETS))
    h.add_argument("--weights", type=_triple, help="w_dense,w_lex,w_mul")
    h.add_argument("--pool", choices=[POOL_DENSE_TOP, POOL_UNION])
    h.add_argument("--dense-k", type=int)
    h.add_argument("--sparse-k", type=int)
    h.add_argument("--rerank-n", type=int)
    h.add_argument("--k", type=int, default=10)
    h.add_argument("--tag", default="tri")
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_hybrid)

    v = sub.add_parser("eval", parents=[common], help="score a run file against qrels")
    v.add_argument("--run", required=True)
    v.add_argument("--qrels", required=True)
    v.add_argument("--metric", choices=["ndcg", "recall"], default="ndcg")
    v.add_argument("--k", type=int, default=10)
    v.add_argument("--report", help="per-query TSV; a figure lands next to it")
    v.set_defaults(func=cmd_eval)

    d = sub.add_parser("distill-check", parents=[common], help="loss stack diagnostics")
    d.add_argument("--batches", type=int, default=4)
    d.add_argument("--length", type=int, default=8)
    d.add_argument("--tau", type=float, default=0.05)
    d.add_argument("--weights", type=_triple, default=(1.0, 0.3, 1.0))
    d.add_argument("--lambdas", type=_triple, default=(1.0, 0.1, 1.0))
    d.set_defaults(func=cmd_distill_check)

    b = sub.add_parser("bench-batching", parents=[common], help="padding cost vs random batches")
    b.add_argument("--docs", type=int, default=5000)
    b.add_argument("--length-mu", type=float, default=6.0)
    b.add_argument("--length-sigma", type=float, default=1.0)
    b.add_argument("--stage", choices=["unsupervised", "finetune"], default="finetune")
    b.add_argument("--divisor", type=int, default=96)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--report", help="per-group TSV; a figure lands next to it")
    b.set_defaults(func=cmd_bench_batching)

    m = sub.add_parser("mine-negatives", parents=[common], help="dense hard negatives")
    m.add_argument("--index", required=True)
    m.add_argument("--queries", required=True)
    m.add_argument("--qrels", required=True)
    m.add_argument("--n", type=int, default=15)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mine_negatives)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except TriRetrieveError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
