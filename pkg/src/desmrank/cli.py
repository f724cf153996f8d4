"""Command line entry point: ``desmrank <subcommand> [options]``.

Option values resolve as defaults < ``--config`` file < ``DESMRANK_*``
environment variables < command-line flags. Every artifact gets a
``<artifact>.config`` sidecar holding the resolved values.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from desmrank import analysis, cbow, corpus, desm, embeddings, evaluation, lexical, mixture, synthetic
from desmrank.embeddings import SpacePair
from desmrank.ranking import ScoredList, rank_scores

log = logging.getLogger("desmrank")

ENV_PREFIX = "DESMRANK_"

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "common": {"seed": 1, "threads": 1, "log_level": "warning"},
    "synth": {"sentences": 50000, "topics": 5, "words_per_topic": 20, "function_words": 30,
              "queries_per_topic": 8, "background_docs": 400},
    "train": {"min_count": corpus.DEFAULT_MIN_COUNT, "dim": 200, "window": 5, "negatives": 5,
              "epochs": 5, "lr": 0.025, "min_lr_ratio": 1e-4,
              "negative_distribution": "empirical_pow(0.75)", "subsample": None},
    "nn": {"pair": "in-out", "k": 6},
    "index": {"space": "out"},
    "rank": {"scorer": "desm", "variant": "in-out", "mode": "telescoped", "k1": 1.7, "b": 0.95,
             "idf": "lucene", "lsa_k": 200, "alpha": 0.5, "tag": None},
    "eval": {"cutoffs": "1,3,10", "binary": False},
    "sweep": {"step": 0.01, "metric": "ndcg@10", "variant": "in-out", "mode": "full",
              "k1": 1.7, "b": 0.95, "idf": "lucene"},
    "analyze": {"query": "cambridge", "variant": "in-out", "threshold": 2, "bins": 20,
                "top": 20},
}


class CliError(Exception):
    """Reported as a one-line error with exit status 1."""


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file with option defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (training only)")
    p.add_argument("--log-level", choices=["debug", "info", "warning", "error"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="desmrank", argument_default=argparse.SUPPRESS,
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, argument_default=argparse.SUPPRESS)
        _add_common(p)
        return p

    p = add("synth", "write a synthetic topical corpus, collection, queries and qrels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sentences", type=int)
    p.add_argument("--topics", type=int)
    p.add_argument("--words-per-topic", type=int)
    p.add_argument("--function-words", type=int)
    p.add_argument("--queries-per-topic", type=int)
    p.add_argument("--background-docs", type=int)

    p = add("train", "train CBOW and write IN and OUT embeddings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--min-count", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--min-lr-ratio", type=float)
    p.add_argument("--negative-distribution")
    p.add_argument("--subsample", type=float)

    p = add("nn", "nearest neighbours of a word in a pair of spaces")
    p.add_argument("--word", required=True)
    p.add_argument("--pair", choices=[sp.label for sp in SpacePair])
    p.add_argument("--k", type=int)
    p.add_argument("--emb", help="embedding prefix (<p>.in.vec, <p>.out.vec)")
    p.add_argument("--in", dest="in_path", help="IN vector file")
    p.add_argument("--out", dest="out_path", help="OUT vector file")

    p = add("index", "precompute document centroids")
    p.add_argument("--docs", required=True)
    p.add_argument("--space", choices=["in", "out"])
    p.add_argument("--out", required=True)
    _add_embedding_args(p)

    p = add("rank", "score candidate documents and write a run file")
    p.add_argument("--scorer", choices=["desm", "bm25", "lsa", "mm"])
    p.add_argument("--variant", choices=[sp.label for sp in SpacePair])
    p.add_argument("--queries", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--candidates", help="qrels or 'qid docid' list; required for telescoped mode")
    p.add_argument("--mode", choices=["telescoped", "full"])
    p.add_argument("--index", help="centroid index built by 'index' (else built from --docs)")
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--idf", choices=["lucene", "robertson"])
    p.add_argument("--lsa-k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tag")
    p.add_argument("--out", required=True)
    _add_embedding_args(p)

    p = add("eval", "NDCG report for a run file")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--cutoffs")
    p.add_argument("--baseline-run")
    p.add_argument("--binary", action="store_true", help="labels are 0/1 clicks")
    p.add_argument("--out", help="also write the report here")

    p = add("sweep", "choose the mixture alpha on training queries")
    p.add_argument("--train-qrels", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--step", type=float)
    p.add_argument("--metric")
    p.add_argument("--variant", choices=[sp.label for sp in SpacePair])
    p.add_argument("--mode", choices=["telescoped", "full"])
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--idf", choices=["lucene", "robertson"])
    p.add_argument("--out", help="write the alpha grid as TSV")
    _add_embedding_args(p)

    p = add("analyze", "diagnostic exports (TSV)")
    p.add_argument("what", choices=["perturb", "project", "dist"])
    p.add_argument("--query", help="perturb: query text")
    p.add_argument("--passages", help="perturb: 'label<TAB>text' per line")
    p.add_argument("--run", help="project: run whose top documents are projected")
    p.add_argument("--runs", nargs="+", help="dist: one run file per feature")
    p.add_argument("--qrels")
    p.add_argument("--queries")
    p.add_argument("--docs")
    p.add_argument("--variant", choices=[sp.label for sp in SpacePair])
    p.add_argument("--threshold", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--top", type=int)
    p.add_argument("--out")
    _add_embedding_args(p)
    return parser


def _add_embedding_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--emb", help="embedding prefix (<p>.in.vec, <p>.out.vec)")
    p.add_argument("--in", dest="in_path", help="IN vector file")
    p.add_argument("--out-vec", dest="out_path", help="OUT vector file")


def _actions(parser: argparse.ArgumentParser, command: str) -> Dict[str, argparse.Action]:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return {a.dest: a for a in sub.choices[command]._actions}


def _convert(action: Optional[argparse.Action], key: str, raw: str) -> Any:
    if action is None:
        return raw
    if isinstance(action, argparse._StoreTrueAction):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if action.nargs == "+":
        return raw.split(",")
    return action.type(raw) if action.type else raw


def read_config_file(path: str | Path) -> Dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(parser: argparse.ArgumentParser, args: argparse.Namespace,
            environ: Dict[str, str]) -> Dict[str, Any]:
    command = args.command
    actions = _actions(parser, command)
    cfg: Dict[str, Any] = {**DEFAULTS["common"], **DEFAULTS.get(command, {})}
    given = vars(args)
    if given.get("config"):
        for key, raw in read_config_file(given["config"]).items():
            if key in actions:
                cfg[key] = _convert(actions[key], key, raw)
    for name, raw in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower()
            if key in actions and key != "config":
                cfg[key] = _convert(actions[key], key, raw)
    cfg.update(given)
    return cfg


def _ensure_parent(path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def write_config_snapshot(artifact: str | Path, cfg: Dict[str, Any]) -> Path:
    path = Path(str(artifact) + ".config")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(cfg):
            value = cfg[key]
            if isinstance(value, (list, tuple)):
                value = ",".join(map(str, value))
            fh.write(f"{key}={value}\n")
    return path


# ---------------------------------------------------------------- helpers

def _load_embedding(cfg: Dict[str, Any], restrict_to=None) -> embeddings.DualEmbedding:
    if cfg.get("emb"):
        prefix = cfg["emb"]
        vocab_path = prefix + ".vocab"
        return embeddings.load(prefix + ".in.vec", prefix + ".out.vec",
                               vocab_path if os.path.exists(vocab_path) else None, restrict_to)
    if cfg.get("in_path") and cfg.get("out_path"):
        return embeddings.load(cfg["in_path"], cfg["out_path"], restrict_to=restrict_to)
    raise CliError("embeddings required: pass --emb <prefix> or both --in and --out-vec")


def _read_docs(path: str) -> List[Tuple[str, List[str]]]:
    docs = [(doc_id, corpus.tokenize(text)) for doc_id, text in corpus.read_keyed_records(path)]
    if len({d for d, _ in docs}) != len(docs):
        raise CliError(f"{path}: duplicate document ids")
    return docs


def _read_queries(path: str) -> Dict[str, List[str]]:
    return {qid: corpus.tokenize(text) for qid, text in corpus.read_keyed_records(path)}


def _read_candidates(path: str) -> Dict[str, List[str]]:
    out: Dict[str, List[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) == 4:
                qid, doc_id = parts[0], parts[2]
            elif len(parts) == 2:
                qid, doc_id = parts
            else:
                raise CliError(f"{path}:{lineno}: expected a qrels line or 'qid docid'")
            out.setdefault(qid, []).append(doc_id)
    return out


def _candidate_sets(cfg, queries, docs) -> Dict[str, List[str]]:
    if cfg["mode"] == "full":
        every = sorted(d for d, _ in docs)
        return {q: every for q in queries}
    if not cfg.get("candidates"):
        raise CliError("telescoped mode needs --candidates")
    return _read_candidates(cfg["candidates"])


def _components(queries, cands, docs, emb, variant, bm25_cfg) -> List[mixture.QueryComponents]:
    variant = SpacePair.parse(variant)
    idx = desm.build_centroid_index(docs, emb, variant.second)
    lex = lexical.build_lexical_index(docs)
    out = []
    for qid in sorted(cands):
        if qid not in queries:
            raise CliError(f"candidate query {qid!r} missing from the queries file")
        c = cands[qid]
        d_all = desm.score_all(queries[qid], idx, emb, variant)
        b_all = lexical.bm25_scores(queries[qid], lex, bm25_cfg)
        d = np.array([d_all[idx.row_of[x]] if x in idx.row_of else np.nan for x in c])
        b = np.array([b_all[lex.row_of[x]] for x in c])
        out.append(mixture.QueryComponents(qid, list(c), d, b))
    return out


def _parse_metric(metric: str) -> int:
    name, _, k = metric.lower().partition("@")
    if name != "ndcg" or not k.isdigit():
        raise CliError(f"unsupported metric {metric!r}; use ndcg@<k>")
    return int(k)


# ---------------------------------------------------------------- commands

def cmd_synth(cfg) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    model = synthetic.TopicModel(n_topics=cfg["topics"], words_per_topic=cfg["words_per_topic"],
                                 n_function_words=cfg["function_words"],
                                 queries_per_topic=cfg["queries_per_topic"])
    sents = synthetic.training_corpus(model, cfg["sentences"], cfg["seed"])
    with open(out / "corpus.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(" ".join(s) + "\n" for s in sents)
    ds = synthetic.make_relevance_dataset(model, seed=cfg["seed"] + 1,
                                          n_background=cfg["background_docs"])
    with open(out / "docs.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{d}\t{' '.join(t)}\n" for d, t in ds.doc_items())
    with open(out / "queries.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{q}\t{' '.join(t)}\n" for q, t in ds.queries.items())
    evaluation.write_qrels(ds.judgments, out / "qrels.txt")
    evaluation.write_qrels(ds.judgments.subset(ds.train_queries), out / "train-qrels.txt")
    evaluation.write_qrels(ds.judgments.subset(ds.test_queries), out / "test-qrels.txt")
    write_config_snapshot(out / "synth", cfg)
    print(f"wrote {len(sents)} sentences, {len(ds.docs)} documents, {len(ds.queries)} queries to {out}")
    return 0


def cmd_train(cfg) -> int:
    vocab = corpus.build_vocabulary(corpus.read_records(cfg["corpus"]), cfg["min_count"])
    tc = cbow.TrainerConfig(dim=cfg["dim"], window=cfg["window"], negatives=cfg["negatives"],
                            epochs=cfg["epochs"], learning_rate=cfg["lr"],
                            min_lr_ratio=cfg["min_lr_ratio"],
                            negative_distribution=cfg["negative_distribution"],
                            subsample_threshold=cfg["subsample"], seed=cfg["seed"],
                            workers=cfg["threads"])
    emb = cbow.train(corpus.read_records(cfg["corpus"]), vocab, tc,
                     on_epoch=lambda e, loss: log.info("epoch %d loss %.5f", e + 1, loss))
    _ensure_parent(cfg["out_prefix"])
    p_in, p_out = embeddings.save(emb, cfg["out_prefix"])
    for p in (p_in, p_out):
        write_config_snapshot(p, cfg)
    print(f"vocabulary {len(vocab)}, dim {tc.dim}: wrote {p_in} and {p_out}")
    return 0


def cmd_nn(cfg) -> int:
    emb = _load_embedding(cfg)
    pair = SpacePair.parse(cfg["pair"])
    try:
        result = embeddings.nearest_neighbors(cfg["word"], pair, cfg["k"], emb)
    except KeyError as e:
        raise CliError(str(e.args[0])) from None
    print(f"{cfg['word']} ({pair.label.upper()})")
    for term, sim in result:
        print(f"{term}\t{sim:.4f}")
    return 0


def cmd_index(cfg) -> int:
    emb = _load_embedding(cfg)
    docs = _read_docs(cfg["docs"])
    idx = desm.build_centroid_index(docs, emb, cfg["space"])
    _ensure_parent(cfg["out"])
    desm.save_index(idx, cfg["out"])
    write_config_snapshot(cfg["out"], cfg)
    print(f"indexed {len(idx.doc_ids)} documents ({len(idx.skipped_docs)} skipped) in "
          f"{cfg['space'].upper()} space")
    return 0


def cmd_rank(cfg) -> int:
    queries = _read_queries(cfg["queries"])
    docs = _read_docs(cfg["docs"])
    cands = _candidate_sets(cfg, queries, docs)
    scorer = cfg["scorer"]
    bm25_cfg = lexical.Bm25Config(k1=cfg["k1"], b=cfg["b"], idf=cfg["idf"])
    lists: List[ScoredList] = []
    if scorer == "desm":
        emb = _load_embedding(cfg)
        variant = SpacePair.parse(cfg["variant"])
        if cfg.get("index"):
            idx = desm.load_index(cfg["index"])
        else:
            idx = desm.build_centroid_index(docs, emb, variant.second)
        for qid in sorted(cands):
            lists.append(desm.rank(queries[qid], cands[qid], idx, emb, variant, query_id=qid))
    elif scorer == "bm25":
        lex = lexical.build_lexical_index(docs)
        for qid in sorted(cands):
            s = lexical.bm25_scores(queries[qid], lex, bm25_cfg)
            lists.append(rank_scores(qid, cands[qid], np.array([s[lex.row_of[d]] for d in cands[qid]])))
    elif scorer == "lsa":
        model = lexical.lsa_train(lexical.build_lexical_index(docs), cfg["lsa_k"])
        for qid in sorted(cands):
            s = lexical.lsa_scores(queries[qid], model)
            lists.append(rank_scores(qid, cands[qid], np.array([s[model.row_of[d]] for d in cands[qid]])))
    else:
        emb = _load_embedding(cfg)
        alpha = cfg["alpha"]
        for qc in _components(queries, cands, docs, emb, cfg["variant"], bm25_cfg):
            lists.append(qc.rank(alpha))
    tag = cfg["tag"] or (scorer if scorer in ("bm25", "lsa") else f"{scorer}-{cfg['variant']}")
    _ensure_parent(cfg["out"])
    evaluation.write_run(lists, cfg["out"], tag=tag)
    write_config_snapshot(cfg["out"], cfg)
    print(f"ranked {len(lists)} queries with {tag}: {cfg['out']}")
    return 0


def cmd_eval(cfg) -> int:
    cutoffs = cfg["cutoffs"]
    if isinstance(cutoffs, str):
        cutoffs = [int(c) for c in cutoffs.split(",") if c.strip()]
    qrels = evaluation.read_qrels(cfg["qrels"], max_grade=1 if cfg["binary"] else evaluation.GRADED_MAX)
    run = evaluation.read_run(cfg["run"])
    baseline = evaluation.read_run(cfg["baseline_run"]) if cfg.get("baseline_run") else None
    report = evaluation.evaluate_run(run, qrels, cutoffs, baseline=baseline)
    text = report.table(Path(cfg["run"]).name) + "\n\n" + report.key_values()
    print(text)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text + "\n", encoding="utf-8")
        write_config_snapshot(cfg["out"], cfg)
    return 0


def cmd_sweep(cfg) -> int:
    k = _parse_metric(cfg["metric"])
    qrels = evaluation.read_qrels(cfg["train_qrels"])
    queries = _read_queries(cfg["queries"])
    docs = _read_docs(cfg["docs"])
    emb = _load_embedding(cfg)
    if cfg["mode"] == "full":
        every = sorted(d for d, _ in docs)
        cands = {q: every for q in qrels.queries()}
    else:
        cands = {q: sorted(qrels.for_query(q)) for q in qrels.queries()}
    bm25_cfg = lexical.Bm25Config(k1=cfg["k1"], b=cfg["b"], idf=cfg["idf"])
    comps = _components(queries, cands, docs, emb, cfg["variant"], bm25_cfg)
    result = mixture.sweep_alpha(comps, qrels, step=cfg["step"], k=k)
    if cfg.get("out"):
        with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"alpha\tndcg@{k}\n")
            for a, v in zip(result.alphas, result.values):
                fh.write(f"{a:.2f}\t{100 * v:.2f}\n")
        write_config_snapshot(cfg["out"], cfg)
    print(f"best alpha={result.best_alpha:.2f} ndcg@{k}={100 * result.values.max():.2f}")
    return 0


def cmd_analyze(cfg) -> int:
    what = cfg["what"]
    if what == "perturb":
        if not cfg.get("passages"):
            raise CliError("analyze perturb needs --passages")
        passages = list(corpus.read_keyed_records(cfg["passages"]))
        words = {t for _, text in passages for t in corpus.tokenize(text)}
        words.update(corpus.tokenize(cfg["query"]))
        emb = _load_embedding(cfg, restrict_to=words)
        try:
            rows = analysis.perturbation_report(passages, cfg["query"], emb)
        except KeyError as e:
            raise CliError(str(e.args[0])) from None
        lines = ["label\tdesm_in_out\tdesm_in_in\tterm_frequency"]
        for r in rows:
            fmt = lambda v: "undefined" if v is None else f"{v:.3f}"  # noqa: E731
            lines.append(f"{r.label}\t{fmt(r.in_out)}\t{fmt(r.in_in)}\t{r.term_frequency}")
        return _emit(cfg, "\n".join(lines) + "\n")

    if what == "project":
        for key in ("run", "queries", "docs", "qrels"):
            if not cfg.get(key):
                raise CliError(f"analyze project needs --{key}")
        emb = _load_embedding(cfg)
        variant = SpacePair.parse(cfg["variant"])
        run = evaluation.read_run(cfg["run"])
        queries = _read_queries(cfg["queries"])
        docs = dict(_read_docs(cfg["docs"]))
        qrels = evaluation.read_qrels(cfg["qrels"])
        groups = []
        for qid in sorted(run):
            qvec = desm.document_centroid(queries.get(qid, []), emb, variant.first)
            if qvec is None:
                continue
            members = []
            for doc_id in run[qid].doc_ids()[:cfg["top"]]:
                dvec = desm.document_centroid(docs.get(doc_id, []), emb, variant.second)
                if dvec is not None:
                    grade = qrels.for_query(qid).get(doc_id)
                    members.append((dvec, analysis.relevance_class(grade, cfg["threshold"])))
            groups.append((qid, qvec, members))
        export = analysis.project_2d(groups)
        out = cfg.get("out") or "projection.tsv"
        export.write_tsv(out)
        write_config_snapshot(out, cfg)
        print(f"wrote {len(export.rows)} points to {out}")
        return 0

    if not cfg.get("runs") or not cfg.get("qrels"):
        raise CliError("analyze dist needs --runs and --qrels")
    qrels = evaluation.read_qrels(cfg["qrels"])
    features = {}
    for path in cfg["runs"]:
        run = evaluation.read_run(path)
        scores = {q: {d: s for d, s in sl.items} for q, sl in run.items()}
        features[Path(path).stem] = analysis.classify_scores(scores, qrels, cfg["threshold"])
    hists = analysis.score_distributions(features, bins=cfg["bins"])
    out = cfg.get("out") or "distributions.tsv"
    analysis.write_histograms_tsv(hists, out)
    write_config_snapshot(out, cfg)
    print(f"wrote histograms for {len(hists)} feature(s) to {out}")
    return 0


def _emit(cfg, text: str) -> int:
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text, encoding="utf-8")
        write_config_snapshot(cfg["out"], cfg)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS: Dict[str, Callable[[Dict[str, Any]], int]] = {
    "synth": cmd_synth, "train": cmd_train, "nn": cmd_nn, "index": cmd_index, "rank": cmd_rank,
    "eval": cmd_eval, "sweep": cmd_sweep, "analyze": cmd_analyze,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        cfg = resolve(parser, args, dict(os.environ))
        logging.basicConfig(level=cfg["log_level"].upper(), format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](cfg)
    except FileNotFoundError as e:
        print(f"error: file-not-found: {e.filename}", file=sys.stderr)
        return 1
    except (CliError, ValueError, KeyError, OSError) as e:
        msg = str(e.args[0]) if isinstance(e, KeyError) and e.args else str(e)
        print(f"error: {type(e).__name__}: {' '.join(msg.split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
