import subprocess
import sys

import pytest

from desmrank import cli


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny synthetic dataset with trained embeddings."""
    d = tmp_path_factory.mktemp("ws")
    assert cli.main(["synth", "--out-dir", str(d / "data"), "--sentences", "3000",
                     "--background-docs", "40", "--seed", "3"]) == 0
    assert cli.main(["train", "--corpus", str(d / "data" / "corpus.txt"), "--out-prefix",
                     str(d / "emb" / "m"), "--dim", "8", "--epochs", "2", "--min-count", "1"]) == 0
    return d


def test_toy_eval(tmp_path, capsys):
    (tmp_path / "qrels").write_text("q1 0 a 2\nq1 0 b 0\nq2 0 c 1\n")
    (tmp_path / "run").write_text("q1 Q0 a 1 3.0 t\nq1 Q0 b 2 1.0 t\nq2 Q0 x 1 2.0 t\n"
                                  "q2 Q0 c 2 1.0 t\n")
    code, out, _ = run(["eval", "--run", tmp_path / "run", "--qrels", tmp_path / "qrels"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split() == ["model", "NDCG@1", "NDCG@3", "NDCG@10"]
    cells = lines[1].split()
    assert cells[1] == "50.00"  # q1 perfect, q2 misses at rank 1
    assert "ndcg@10=" in out


def test_unknown_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 2


def test_missing_file_is_a_one_line_error(tmp_path, capsys):
    code, out, err = run(["eval", "--run", tmp_path / "nope", "--qrels", tmp_path / "nope2"],
                         capsys)
    assert code == 1
    assert err.count("\n") == 1 and err.startswith("error: ")
    assert "nope" in err


def test_malformed_input_is_a_one_line_error(tmp_path, capsys):
    (tmp_path / "qrels").write_text("q1 0 a\n")
    (tmp_path / "run").write_text("q1 Q0 a 1 3.0 t\n")
    code, _, err = run(["eval", "--run", tmp_path / "run", "--qrels", tmp_path / "qrels"], capsys)
    assert code == 1
    assert err.startswith("error: ValueError:") and err.count("\n") == 1


def test_config_resolution_order(tmp_path):
    cfg_file = tmp_path / "c.cfg"
    cfg_file.write_text("# comment\ndim=16\nwindow=3\nepochs=2\n")
    parser = cli.build_parser()
    args = parser.parse_args(["train", "--corpus", "x", "--out-prefix", "y",
                              "--config", str(cfg_file), "--epochs", "9"])
    env = {"DESMRANK_WINDOW": "4", "DESMRANK_NEGATIVES": "7", "UNRELATED": "1"}
    cfg = cli.resolve(parser, args, env)
    assert cfg["dim"] == 16        # config file over default
    assert cfg["window"] == 4      # env over config file
    assert cfg["negatives"] == 7   # env over default
    assert cfg["epochs"] == 9      # flag over everything
    assert cfg["lr"] == 0.025      # default


def test_bad_config_line(tmp_path, capsys):
    cfg_file = tmp_path / "c.cfg"
    cfg_file.write_text("dim 16\n")
    code, _, err = run(["train", "--corpus", "x", "--out-prefix", tmp_path / "y",
                        "--config", cfg_file], capsys)
    assert code == 1 and "key=value" in err


def test_pipeline_and_sidecars(workspace, tmp_path, capsys):
    data, emb = workspace / "data", workspace / "emb" / "m"
    assert (workspace / "emb" / "m.in.vec.config").exists()
    assert (workspace / "emb" / "m.out.vec.config").exists()
    code, out, _ = run(["nn", "--word", "t0w00", "--emb", emb, "--pair", "in-in", "--k", "3"],
                       capsys)
    assert code == 0 and out.splitlines()[0].split()[0] == "t0w00"

    code, _, _ = run(["index", "--docs", data / "docs.tsv", "--emb", emb,
                      "--out", tmp_path / "idx" / "c.idx"], capsys)
    assert code == 0 and (tmp_path / "idx" / "c.idx.config").exists()

    for scorer in ("desm", "bm25", "lsa", "mm"):
        out_run = tmp_path / f"{scorer}.run"
        argv = ["rank", "--scorer", scorer, "--queries", data / "queries.tsv",
                "--docs", data / "docs.tsv", "--candidates", data / "qrels.txt",
                "--out", out_run, "--lsa-k", "20"]
        if scorer in ("desm", "mm"):
            argv += ["--emb", emb]
        if scorer == "desm":
            argv += ["--index", tmp_path / "idx" / "c.idx"]
        code, _, err = run(argv, capsys)
        assert code == 0, err
        assert out_run.exists() and (tmp_path / f"{scorer}.run.config").exists()

    code, out, _ = run(["eval", "--run", tmp_path / "desm.run", "--qrels", data / "qrels.txt",
                        "--baseline-run", tmp_path / "bm25.run"], capsys)
    assert code == 0 and "NDCG@10" in out

    code, out, _ = run(["sweep", "--train-qrels", data / "train-qrels.txt", "--queries",
                        data / "queries.tsv", "--docs", data / "docs.tsv", "--emb", emb,
                        "--step", "0.1", "--out", tmp_path / "sweep.tsv"], capsys)
    assert code == 0 and out.startswith("best alpha=")
    assert len((tmp_path / "sweep.tsv").read_text().splitlines()) == 12

    (tmp_path / "passages.tsv").write_text("on\tt0w10 t0w11 fn00\noff\tt1w10 t0w00\n")
    code, out, _ = run(["analyze", "perturb", "--query", "t0w00", "--passages",
                        tmp_path / "passages.tsv", "--emb", emb], capsys)
    assert code == 0
    assert out.splitlines()[0] == "label\tdesm_in_out\tdesm_in_in\tterm_frequency"
    assert out.splitlines()[2].endswith("\t1")

    code, _, _ = run(["analyze", "project", "--run", tmp_path / "desm.run", "--queries",
                      data / "queries.tsv", "--docs", data / "docs.tsv", "--qrels",
                      data / "qrels.txt", "--emb", emb, "--out", tmp_path / "proj.tsv"], capsys)
    assert code == 0 and (tmp_path / "proj.tsv").exists()

    # telescoped runs hold judged documents only, so the unjudged class is empty
    with pytest.warns(UserWarning, match="random-irrelevant"):
        code, _, _ = run(["analyze", "dist", "--runs", tmp_path / "desm.run",
                          tmp_path / "bm25.run", "--qrels", data / "qrels.txt",
                          "--out", tmp_path / "dist.tsv"], capsys)
    assert code == 0 and "desm" in (tmp_path / "dist.tsv").read_text()


def test_embeddings_required(workspace, tmp_path, capsys):
    data = workspace / "data"
    code, _, err = run(["rank", "--scorer", "desm", "--queries", data / "queries.tsv",
                        "--docs", data / "docs.tsv", "--mode", "full",
                        "--out", tmp_path / "r.run"], capsys)
    assert code == 1 and "--emb" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "desmrank", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "train" in res.stdout
