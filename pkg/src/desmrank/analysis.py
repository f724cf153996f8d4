"""Diagnostics: word perturbation tables, 2-D PCA exports and score histograms.

Everything here emits plain tabular data; plotting is left to other tools.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from desmrank.corpus import tokenize
from desmrank.desm import build_centroid_index, desm_score
from desmrank.embeddings import DualEmbedding, Space, SpacePair
from desmrank.evaluation import Judgments

RELEVANT = "relevant"
JUDGED_IRRELEVANT = "judged-irrelevant"
RANDOM_IRRELEVANT = "random-irrelevant"
CLASSES = (RELEVANT, JUDGED_IRRELEVANT, RANDOM_IRRELEVANT)


@dataclass(frozen=True)
class PerturbationRow:
    label: str
    in_out: Optional[float]
    in_in: Optional[float]
    term_frequency: int


def perturbation_report(passages: Sequence[Tuple[str, str]], query: str,
                        emb: DualEmbedding) -> List[PerturbationRow]:
    """DESM IN-OUT, DESM IN-IN and raw query-term count for each labelled passage."""
    q_tokens = tokenize(query)
    missing = [t for t in q_tokens if t not in emb.vocab]
    if not q_tokens or missing:
        raise KeyError(f"query term(s) not in embedding vocabulary: {missing or query!r}")
    docs = [(str(i), tokenize(text)) for i, (_, text) in enumerate(passages)]
    idx_out = build_centroid_index(docs, emb, Space.OUT)
    idx_in = build_centroid_index(docs, emb, Space.IN)
    rows = []
    for (label, _), (doc_id, tokens) in zip(passages, docs):
        tf = sum(1 for t in tokens for q in q_tokens if t == q)
        rows.append(PerturbationRow(
            label=label,
            in_out=desm_score(q_tokens, doc_id, idx_out, emb, SpacePair.IN_OUT),
            in_in=desm_score(q_tokens, doc_id, idx_in, emb, SpacePair.IN_IN),
            term_frequency=tf,
        ))
    return rows


@dataclass
class Pca2D:
    coords: np.ndarray
    explained_variance: np.ndarray
    components: np.ndarray


def pca_2d(points: np.ndarray) -> Pca2D:
    """Project ``points`` (n x d) onto their top two principal components."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("need at least 3 points of equal dimension")
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    var = s ** 2 / (x.shape[0] - 1)
    tol = (s[0] if s.size else 0.0) * max(x.shape) * np.finfo(np.float64).eps
    n_dirs = int(np.sum(s > tol))
    comps = np.zeros((2, x.shape[1]))
    take = min(2, n_dirs)
    comps[:take] = vt[:take]
    if take < 2:
        warnings.warn(f"only {n_dirs} direction(s) with nonzero variance; padding with 0",
                      stacklevel=2)
    for i in range(take):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    explained = np.zeros(2)
    explained[:take] = var[:take]
    return Pca2D(coords=xc @ comps.T, explained_variance=explained, components=comps)


@dataclass
class ProjectionExport:
    # (query id, point kind, label, x, y); kind is "query" or "doc"
    rows: List[Tuple[str, str, str, float, float]]
    explained_variance: np.ndarray

    def write_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["query_id", "kind", "label", "x", "y"])
            for qid, kind, label, x, y in self.rows:
                w.writerow([qid, kind, label, repr(x), repr(y)])


def project_2d(groups: Sequence[Tuple[str, np.ndarray, Sequence[Tuple[np.ndarray, str]]]]) -> ProjectionExport:
    """PCA export with each query moved to the origin.

    ``groups`` holds ``(query_id, query_vector, [(doc_vector, label), ...])``.
    Documents become ``doc - query`` and every query becomes the zero vector
    before the projection.
    """
    meta: List[Tuple[str, str, str]] = []
    pts: List[np.ndarray] = []
    for qid, qvec, docs in groups:
        qvec = np.asarray(qvec, dtype=np.float64)
        meta.append((qid, "query", "query"))
        pts.append(np.zeros_like(qvec))
        for dvec, label in docs:
            meta.append((qid, "doc", label))
            pts.append(np.asarray(dvec, dtype=np.float64) - qvec)
    pca = pca_2d(np.vstack(pts))
    rows = [(q, kind, label, float(x), float(y))
            for (q, kind, label), (x, y) in zip(meta, pca.coords)]
    return ProjectionExport(rows=rows, explained_variance=pca.explained_variance)


def relevance_class(grade: Optional[int], threshold: int = 2) -> str:
    """Class of a document for a query: judged grade >= threshold, judged below it, or unjudged."""
    if grade is None:
        return RANDOM_IRRELEVANT
    return RELEVANT if grade >= threshold else JUDGED_IRRELEVANT


def classify_scores(scores: Mapping[str, Mapping[str, float]], judgments: Judgments,
                    threshold: int = 2) -> Dict[str, List[float]]:
    """Split ``{qid: {doc_id: score}}`` into the three relevance classes."""
    out: Dict[str, List[float]] = {c: [] for c in CLASSES}
    for qid in sorted(scores):
        judged = judgments.for_query(qid)
        for doc_id in sorted(scores[qid]):
            s = scores[qid][doc_id]
            if s is None or np.isnan(s):
                continue
            out[relevance_class(judged.get(doc_id), threshold)].append(float(s))
    return out


@dataclass
class Histogram:
    feature: str
    edges: np.ndarray
    counts: Dict[str, np.ndarray]
    mean: Dict[str, float]
    variance: Dict[str, float]
    sizes: Dict[str, int]


def score_distributions(features: Mapping[str, Mapping[str, Sequence[float]]],
                        bins: int = 20) -> List[Histogram]:
    """Per-feature histograms with bin edges shared by all classes of that feature.

    ``features`` maps feature name -> class name -> scores.
    """
    out = []
    for name in features:
        by_class = {c: np.asarray(v, dtype=np.float64) for c, v in features[name].items()}
        nonempty = [v for v in by_class.values() if v.size]
        if nonempty:
            lo = min(float(v.min()) for v in nonempty)
            hi = max(float(v.max()) for v in nonempty)
        else:
            lo, hi = 0.0, 1.0
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        counts, mean, var, sizes = {}, {}, {}, {}
        for c, v in by_class.items():
            if v.size == 0:
                warnings.warn(f"feature {name!r}: class {c!r} is empty", stacklevel=2)
                counts[c] = np.zeros(bins, dtype=np.int64)
                mean[c] = float("nan")
                var[c] = float("nan")
            else:
                counts[c] = np.histogram(v, bins=edges)[0]
                mean[c] = float(v.mean())
                var[c] = float(v.var(ddof=1)) if v.size > 1 else 0.0
            sizes[c] = int(v.size)
        out.append(Histogram(name, edges, counts, mean, var, sizes))
    return out


def write_histograms_tsv(hists: Sequence[Histogram], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["feature", "class", "bin_lo", "bin_hi", "count"])
        for h in hists:
            for c, counts in h.counts.items():
                for i, n in enumerate(counts):
                    w.writerow([h.feature, c, repr(float(h.edges[i])),
                                repr(float(h.edges[i + 1])), int(n)])
        w.writerow([])
        w.writerow(["feature", "class", "n", "mean", "variance"])
        for h in hists:
            for c in h.counts:
                w.writerow([h.feature, c, h.sizes[c], repr(h.mean[c]), repr(h.variance[c])])
