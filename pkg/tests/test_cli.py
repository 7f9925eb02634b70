import contextlib
import io
import json
import os

import pytest

from tri_retrieve.cli import main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def run_ok(*argv):
    code, out, err = run(*argv)
    assert code == 0, f"argv={argv}\nstdout={out}\nstderr={err}"
    return out


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_ws")
    p = {name: str(root / name) for name in (
        "docs.txt", "queries.txt", "qrels.txt",
        "docs.emb", "queries.emb",
        "dense.idx", "sparse.idx", "multivec.emb",
        "dense.run", "sparse.run", "multivec.run", "bm25.run", "hybrid.run",
        "report.tsv", "negs.tsv",
    )}
    run_ok(
        "gen", "--docs", 80, "--queries", 16, "--vocab", 60000, "--dim", 32,
        "--seed", 5, "--out-docs", p["docs.txt"], "--out-queries", p["queries.txt"],
        "--out-qrels", p["qrels.txt"],
    )
    for src, dst in ((p["docs.txt"], p["docs.emb"]), (p["queries.txt"], p["queries.emb"])):
        run_ok("encode", "--input", src, "--output", dst, "--dim", 32, "--seed", 5)
    run_ok("index", "--mode", "dense", "--embeddings", p["docs.emb"], "--out", p["dense.idx"])
    run_ok("index", "--mode", "sparse", "--embeddings", p["docs.emb"],
           "--tokens", p["docs.txt"], "--out", p["sparse.idx"])
    run_ok("index", "--mode", "multivec", "--embeddings", p["docs.emb"], "--out", p["multivec.emb"])
    for mode, index, queries in (
        ("dense", p["dense.idx"], p["queries.emb"]),
        ("sparse", p["sparse.idx"], p["queries.emb"]),
        ("multivec", p["multivec.emb"], p["queries.emb"]),
        ("bm25", p["sparse.idx"], p["queries.txt"]),
    ):
        run_ok("search", "--mode", mode, "--index", index, "--queries", queries,
               "--k", 10, "--out", p[f"{mode}.run"])
    run_ok(
        "hybrid", "--dense-index", p["dense.idx"], "--sparse-index", p["sparse.idx"],
        "--multivec-index", p["multivec.emb"], "--queries", p["queries.emb"],
        "--preset", "miracl_all", "--dense-k", 80, "--rerank-n", 80,
        "--k", 10, "--out", p["hybrid.run"],
    )
    run_ok("mine-negatives", "--index", p["dense.idx"], "--queries", p["queries.emb"],
           "--qrels", p["qrels.txt"], "--n", 5, "--out", p["negs.tsv"])
    return p


def test_walkthrough_artifacts_exist(ws):
    for path in ws.values():
        if path.endswith("report.tsv"):
            continue
        assert os.path.exists(path), path
    assert os.path.exists(ws["docs.emb"] + ".manifest.json")


def test_run_files_are_parseable(ws):
    from tri_retrieve.evalkit import read_run

    # zero-score queries legitimately vanish from term-channel run files
    floors = {"dense.run": 16, "multivec.run": 16, "hybrid.run": 16,
              "sparse.run": 10, "bm25.run": 10}
    for name, floor in floors.items():
        run_data = read_run(ws[name])
        assert floor <= len(run_data) <= 16
        for ranking in run_data.values():
            assert 1 <= len(ranking) <= 10


def test_eval_stdout_and_report(ws):
    out = run_ok("eval", "--run", ws["hybrid.run"], "--qrels", ws["qrels.txt"],
                 "--metric", "ndcg", "--k", 10, "--report", ws["report.tsv"])
    first = out.splitlines()[0]
    assert first.startswith("ndcg@10=")
    value = float(first.split("=")[1])
    assert 0.0 <= value <= 1.0
    with open(ws["report.tsv"], encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "qid\tndcg@10"
    assert lines[-1].startswith("__mean__\t")
    assert abs(float(lines[-1].split("\t")[1]) - value) < 1e-6
    png = ws["report.tsv"][:-4] + ".png"
    with open(png, "rb") as fh:
        assert fh.read(8) == b"\x89PNG\r\n\x1a\n"


def test_hybrid_beats_or_matches_dense_here(ws):
    # not the acceptance experiment, just a sanity direction on one seed
    def mean_ndcg(run_path):
        out = run_ok("eval", "--run", run_path, "--qrels", ws["qrels.txt"])
        return float(out.splitlines()[0].split("=")[1])

    assert mean_ndcg(ws["hybrid.run"]) >= mean_ndcg(ws["dense.run"]) - 1e-9


def test_mined_negatives_exclude_positives(ws):
    from tri_retrieve.evalkit import read_qrels

    qrels = read_qrels(ws["qrels.txt"])
    with open(ws["negs.tsv"], encoding="utf-8") as fh:
        for line in fh:
            qid, neg = line.split()
            assert neg not in qrels[qid]


def test_reruns_are_byte_identical(ws, tmp_path):
    again = {
        "docs.txt": str(tmp_path / "docs2.txt"),
        "queries.txt": str(tmp_path / "queries2.txt"),
        "qrels.txt": str(tmp_path / "qrels2.txt"),
        "docs.emb": str(tmp_path / "docs2.emb"),
        "hybrid.run": str(tmp_path / "hybrid2.run"),
    }
    run_ok(
        "gen", "--docs", 80, "--queries", 16, "--vocab", 60000, "--dim", 32,
        "--seed", 5, "--out-docs", again["docs.txt"],
        "--out-queries", again["queries.txt"], "--out-qrels", again["qrels.txt"],
    )
    run_ok("encode", "--input", again["docs.txt"], "--output", again["docs.emb"],
           "--dim", 32, "--seed", 5)
    run_ok(
        "hybrid", "--dense-index", ws["dense.idx"], "--sparse-index", ws["sparse.idx"],
        "--multivec-index", ws["multivec.emb"], "--queries", ws["queries.emb"],
        "--preset", "miracl_all", "--dense-k", 80, "--rerank-n", 80,
        "--k", 10, "--out", again["hybrid.run"],
    )
    for name in again:
        with open(ws[name], "rb") as a, open(again[name], "rb") as b:
            assert a.read() == b.read(), name


def test_thread_count_does_not_change_bytes(ws, tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("TRI_RETRIEVE_THREADS", threads)
        out = str(tmp_path / f"t{threads}.emb")
        run_ok("encode", "--input", ws["docs.txt"], "--output", out,
               "--dim", 32, "--seed", 5)
        outs.append(out)
    with open(outs[0], "rb") as a, open(outs[1], "rb") as b:
        assert a.read() == b.read()


def test_config_supplies_defaults_flags_win(ws, tmp_path):
    cfg = tmp_path / "tri.ini"
    cfg.write_text("[encoder]\ndim = 16\n")

    def manifest_dim(path):
        with open(path + ".manifest.json", encoding="utf-8") as fh:
            return json.load(fh)["dim"]

    from_cfg = str(tmp_path / "cfg.emb")
    run_ok("encode", "--input", ws["docs.txt"], "--output", from_cfg,
           "--config", str(cfg), "--seed", 5)
    assert manifest_dim(from_cfg) == 16

    flag_wins = str(tmp_path / "flag.emb")
    run_ok("encode", "--input", ws["docs.txt"], "--output", flag_wins,
           "--config", str(cfg), "--dim", 24, "--seed", 5)
    assert manifest_dim(flag_wins) == 24


def test_unknown_flag_exits_two(ws):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--run", ws["hybrid.run"], "--qrels", ws["qrels.txt"], "--frobnicate"])
    assert exc.value.code == 2


def test_missing_file_exits_one_with_class_name(tmp_path):
    code, _, err = run("eval", "--run", str(tmp_path / "absent.run"),
                       "--qrels", str(tmp_path / "absent.txt"))
    assert code == 1
    assert "FileNotFoundError" in err


def test_corrupt_run_exits_one_with_parse_error(ws, tmp_path):
    bad = tmp_path / "bad.run"
    bad.write_text("q1 Q0 d1 1 notafloat tag\n")
    code, _, err = run("eval", "--run", str(bad), "--qrels", ws["qrels.txt"])
    assert code == 1
    assert "ParseError" in err and "line 1" in err


def test_hybrid_requires_weights_or_preset(ws, tmp_path):
    code, _, err = run(
        "hybrid", "--dense-index", ws["dense.idx"], "--queries", ws["queries.emb"],
        "--out", str(tmp_path / "x.run"),
    )
    assert code == 1
    assert "MissingRepresentation" in err


def test_hybrid_missing_index_for_config(ws, tmp_path):
    code, _, err = run(
        "hybrid", "--dense-index", ws["dense.idx"], "--queries", ws["queries.emb"],
        "--preset", "miracl_all", "--out", str(tmp_path / "x.run"),
    )
    assert code == 1
    assert "sparse-index" in err


def test_distill_check_reports_small_fd_error():
    out = run_ok("distill-check", "--batches", 3, "--length", 6, "--seed", 2)
    lines = out.splitlines()
    assert len(lines) == 3
    for line in lines:
        assert "L_final=" in line
        fd = float(line.rsplit("fd_rel_err=", 1)[1])
        assert fd < 1e-5


def test_bench_batching_grouped_wins(tmp_path):
    report = str(tmp_path / "padding.tsv")
    out = run_ok("bench-batching", "--docs", 3000, "--seed", 1, "--report", report)
    line = out.splitlines()[0]
    fields = dict(part.split("=") for part in line.split())
    assert float(fields["grouped_fraction"]) < float(fields["random_fraction"])
    assert float(fields["ratio"]) < 1.0
    with open(report, encoding="utf-8") as fh:
        assert fh.readline().startswith("group\tlo\thi")
    with open(tmp_path / "padding.png", "rb") as fh:
        assert fh.read(8) == b"\x89PNG\r\n\x1a\n"
