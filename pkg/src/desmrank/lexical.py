"""Lexical baselines: BM25 and LSA over a term-document matrix."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds


@dataclass
class LexicalIndex:
    """Term statistics over a document collection.

    Has its own vocabulary: every token counts here, whether or not the
    embedding model knows it.
    """

    doc_ids: List[str]
    tf: List[Counter]
    lengths: np.ndarray
    df: Dict[str, int]
    row_of: Dict[str, int] = field(init=False, repr=False)
    postings: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.row_of = {d: i for i, d in enumerate(self.doc_ids)}
        if len(self.row_of) != len(self.doc_ids):
            raise ValueError("duplicate document ids")
        docs_of: Dict[str, List[int]] = {}
        tfs_of: Dict[str, List[int]] = {}
        for i, counts in enumerate(self.tf):
            for t, c in counts.items():
                docs_of.setdefault(t, []).append(i)
                tfs_of.setdefault(t, []).append(c)
        self.postings = {t: (np.asarray(docs_of[t], dtype=np.int64),
                             np.asarray(tfs_of[t], dtype=np.float64)) for t in docs_of}

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def avg_length(self) -> float:
        return float(self.lengths.mean()) if self.n_docs else 0.0


def build_lexical_index(docs: Iterable[Tuple[str, Sequence[str]]]) -> LexicalIndex:
    doc_ids, tfs, lengths = [], [], []
    df: Counter = Counter()
    for doc_id, tokens in docs:
        counts = Counter(tokens)
        doc_ids.append(doc_id)
        tfs.append(counts)
        lengths.append(len(tokens))
        df.update(counts.keys())
    return LexicalIndex(doc_ids=doc_ids, tf=tfs, lengths=np.asarray(lengths, dtype=np.float64),
                        df=dict(df))


@dataclass(frozen=True)
class Bm25Config:
    k1: float = 1.7
    b: float = 0.95
    # "lucene": ln(1 + (N - df + .5)/(df + .5)), never negative
    # "robertson": ln((N - df + .5)/(df + .5)), negative for df > N/2
    idf: str = "lucene"

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be in [0, 1]")
        if self.idf not in ("lucene", "robertson"):
            raise ValueError(f"unknown idf variant {self.idf!r}")


def bm25_idf(df: int, n_docs: int, cfg: Bm25Config = Bm25Config()) -> float:
    ratio = (n_docs - df + 0.5) / (df + 0.5)
    return math.log1p(ratio) if cfg.idf == "lucene" else math.log(ratio)


def _length_norm(length: float, avg: float, cfg: Bm25Config) -> float:
    if avg <= 0:
        return 1.0
    return 1.0 - cfg.b + cfg.b * length / avg


def bm25_score(query: Sequence[str], doc_id: str, index: LexicalIndex,
               cfg: Bm25Config = Bm25Config()) -> float:
    """BM25 of one document. Repeated query terms count once."""
    row = index.row_of[doc_id]
    counts = index.tf[row]
    norm = _length_norm(float(index.lengths[row]), index.avg_length, cfg)
    score = 0.0
    for t in dict.fromkeys(query):
        tf = counts.get(t, 0)
        if tf == 0:
            continue
        idf = bm25_idf(index.df[t], index.n_docs, cfg)
        score += idf * tf * (cfg.k1 + 1) / (tf + cfg.k1 * norm)
    return score


def bm25_scores(query: Sequence[str], index: LexicalIndex,
                cfg: Bm25Config = Bm25Config()) -> np.ndarray:
    """BM25 for every document, aligned with ``index.doc_ids`` (posting-list traversal)."""
    out = np.zeros(index.n_docs)
    avg = index.avg_length
    for t in dict.fromkeys(query):
        post = index.postings.get(t)
        if post is None:
            continue
        rows, tf = post
        idf = bm25_idf(index.df[t], index.n_docs, cfg)
        if avg > 0:
            norm = 1.0 - cfg.b + cfg.b * index.lengths[rows] / avg
        else:
            norm = np.ones(len(rows))
        out[rows] += idf * tf * (cfg.k1 + 1) / (tf + cfg.k1 * norm)
    return out


@dataclass
class LsaModel:
    k: int
    terms: Dict[str, int]
    idf: np.ndarray
    term_vectors: np.ndarray
    singular_values: np.ndarray
    doc_ids: List[str]
    doc_vectors: np.ndarray

    def __post_init__(self) -> None:
        self.row_of = {d: i for i, d in enumerate(self.doc_ids)}


def tfidf_matrix(index: LexicalIndex) -> Tuple[sp.csr_matrix, Dict[str, int], np.ndarray]:
    """Terms x documents matrix weighted tf * ln(N / df); terms sorted for stable row order."""
    terms = sorted(index.df)
    term_row = {t: i for i, t in enumerate(terms)}
    n = index.n_docs
    idf = np.array([math.log(n / index.df[t]) for t in terms]) if terms else np.zeros(0)
    rows, cols, vals = [], [], []
    for j, counts in enumerate(index.tf):
        for t, c in counts.items():
            i = term_row[t]
            rows.append(i)
            cols.append(j)
            vals.append(c * idf[i])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(len(terms), n), dtype=np.float64)
    return m, term_row, idf


def truncated_svd(m: sp.spmatrix | np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-``k`` singular triplets in descending order, with deterministic signs.

    Uses ARPACK when ``k`` is below the smaller dimension, a dense SVD otherwise.
    """
    small = min(m.shape)
    if k < small:
        v0 = np.ones(small) / math.sqrt(small)
        u, s, vt = svds(sp.csr_matrix(m), k=k, v0=v0, solver="arpack")
        order = np.argsort(-s, kind="stable")
        u, s, vt = u[:, order], s[order], vt[order]
    else:
        dense = m.toarray() if sp.issparse(m) else np.asarray(m)
        u, s, vt = np.linalg.svd(dense, full_matrices=False)
        u, s, vt = u[:, :k], s[:k], vt[:k]
    # fix the sign of each component on its largest-magnitude term loading
    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])])
    flip[flip == 0] = 1.0
    return u * flip, s, vt * flip[:, None]


def lsa_train(index: LexicalIndex, k: int = 200) -> LsaModel:
    """Rank-``k`` truncated SVD of the TF-IDF term-document matrix.

    If ``k`` exceeds the numerical rank, it is reduced with a warning.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m, terms, idf = tfidf_matrix(index)
    if min(m.shape) == 0:
        raise ValueError("cannot train LSA on an empty term-document matrix")
    k_eff = min(k, min(m.shape))
    u, s, vt = truncated_svd(m, k_eff)
    tol = (s[0] if s.size else 0.0) * max(m.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    if rank < k:
        warnings.warn(f"LSA k={k} exceeds matrix rank {rank}; using k={rank}", stacklevel=2)
        u, s, vt = u[:, :rank], s[:rank], vt[:rank]
    return LsaModel(k=rank, terms=terms, idf=idf, term_vectors=u, singular_values=s,
                    doc_ids=list(index.doc_ids), doc_vectors=vt.T.copy())


def fold_in(query: Sequence[str], model: LsaModel) -> Optional[np.ndarray]:
    """Latent vector of a query: S^-1 U^T q for its TF-IDF vector q; ``None`` if no term is known."""
    counts = Counter(t for t in query if t in model.terms)
    if not counts:
        return None
    q = np.zeros(len(model.terms))
    for t, c in counts.items():
        i = model.terms[t]
        q[i] = c * model.idf[i]
    return (model.term_vectors.T @ q) / model.singular_values


def lsa_scores(query: Sequence[str], model: LsaModel) -> np.ndarray:
    """Cosine between the folded-in query and each document; NaN where undefined."""
    n = len(model.doc_ids)
    z = fold_in(query, model)
    out = np.full(n, np.nan)
    if z is None:
        return out
    zn = float(np.linalg.norm(z))
    dn = np.linalg.norm(model.doc_vectors, axis=1)
    if zn == 0:
        return out
    ok = dn > 0
    out[ok] = np.clip((model.doc_vectors[ok] @ z) / (dn[ok] * zn), -1.0, 1.0)
    return out


def lsa_score(query: Sequence[str], doc_id: str, model: LsaModel) -> Optional[float]:
    s = lsa_scores(query, model)[model.row_of[doc_id]]
    return None if np.isnan(s) else float(s)
