"""Dual Embedding Space Model scoring against precomputed document centroids.

A document is represented by the mean of the unit-normalized vectors of
its in-vocabulary tokens (repeats count repeatedly). A query scores a
document by the mean, over its in-vocabulary terms, of the cosine between
the term's vector in the query space and that centroid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from desmrank.corpus import encode
from desmrank.embeddings import DualEmbedding, Space, SpacePair, ZeroVectorError, row_norms
from desmrank.ranking import ScoredList, rank_scores

_MAGIC = b"DESMIDX1"
_HEADER = struct.Struct("<8sIIIIB")


@dataclass
class CentroidIndex:
    space: Space
    doc_ids: List[str]
    centroids: np.ndarray
    skipped_docs: List[str] = field(default_factory=list)
    vocab_size: int = 0
    row_of: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.space = Space(self.space)
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.shape[0] != len(self.doc_ids):
            raise ValueError("one centroid per document expected")
        self.row_of = {d: i for i, d in enumerate(self.doc_ids)}
        if len(self.row_of) != len(self.doc_ids) or set(self.skipped_docs) & self.row_of.keys():
            raise ValueError("duplicate document ids")
        self._skipped = frozenset(self.skipped_docs)
        self._norms = row_norms(self.centroids)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def centroid_of(self, doc_id: str) -> np.ndarray:
        return self.centroids[self.row_of[doc_id]]

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self.row_of or doc_id in self._skipped


def _unit_vectors(ids: Sequence[int], m: np.ndarray, vocab) -> np.ndarray:
    rows = m[np.asarray(ids, dtype=np.int64)]
    norms = row_norms(rows)
    if np.any(norms == 0):
        bad = vocab.terms[ids[int(np.argmin(norms))]]
        raise ZeroVectorError(f"word {bad!r} has a zero vector and cannot be normalized")
    return rows / norms[:, None]


def document_centroid(tokens: Sequence[str], emb: DualEmbedding,
                      space: Space | str) -> Optional[np.ndarray]:
    """Centroid of normalized word vectors, or ``None`` if no token is in vocabulary."""
    ids, _ = encode(tokens, emb.vocab)
    if not ids:
        return None
    return _unit_vectors(ids, emb.matrix(space), emb.vocab).mean(axis=0)


def build_centroid_index(docs: Iterable[Tuple[str, Sequence[str]]], emb: DualEmbedding,
                         space: Space | str) -> CentroidIndex:
    space = Space(space)
    doc_ids: List[str] = []
    rows: List[np.ndarray] = []
    skipped: List[str] = []
    for doc_id, tokens in docs:
        c = document_centroid(tokens, emb, space)
        if c is None:
            skipped.append(doc_id)
        else:
            doc_ids.append(doc_id)
            rows.append(c)
    centroids = np.vstack(rows) if rows else np.zeros((0, emb.dim))
    return CentroidIndex(space=space, doc_ids=doc_ids, centroids=centroids,
                         skipped_docs=skipped, vocab_size=len(emb.vocab))


def _check_variant(variant: SpacePair, index: CentroidIndex) -> None:
    if variant.second is not index.space:
        raise ValueError(f"variant {variant.label} needs a {variant.second.value.upper()} "
                         f"centroid index, got {index.space.value.upper()}")


def query_vectors(query: Sequence[str], emb: DualEmbedding,
                  space: Space | str) -> Optional[np.ndarray]:
    """Unit query-term vectors (one row per in-vocabulary occurrence), or ``None``."""
    ids, _ = encode(query, emb.vocab)
    if not ids:
        return None
    return _unit_vectors(ids, emb.matrix(space), emb.vocab)


def score_all(query: Sequence[str], index: CentroidIndex, emb: DualEmbedding,
              variant: SpacePair | str = SpacePair.IN_OUT) -> np.ndarray:
    """DESM score against every indexed document, aligned with ``index.doc_ids``.

    NaN marks an undefined score (all-OOV query or zero centroid).
    """
    variant = SpacePair.parse(variant)
    _check_variant(variant, index)
    q = query_vectors(query, emb, variant.first)
    n = len(index.doc_ids)
    if q is None or n == 0:
        return np.full(n, np.nan)
    norms = index._norms
    ok = norms > 0
    out = np.full(n, np.nan)
    # mean_i cos(q_i, D) == (mean_i q_i/|q_i|) . D / |D|
    out[ok] = (index.centroids[ok] @ q.mean(axis=0)) / norms[ok]
    np.clip(out, -1.0, 1.0, out=out)
    return out


def desm_score(query: Sequence[str], doc_id: str, index: CentroidIndex, emb: DualEmbedding,
               variant: SpacePair | str = SpacePair.IN_OUT) -> Optional[float]:
    """Mean cosine between query terms and the document centroid; ``None`` if undefined."""
    variant = SpacePair.parse(variant)
    _check_variant(variant, index)
    if doc_id in index._skipped:
        return None
    if doc_id not in index.row_of:
        raise KeyError(f"document not indexed: {doc_id!r}")
    q = query_vectors(query, emb, variant.first)
    row = index.row_of[doc_id]
    d_norm = index._norms[row]
    if q is None or d_norm == 0:
        return None
    cosines = (q @ index.centroids[row]) / d_norm
    return float(np.clip(cosines.mean(), -1.0, 1.0))


def rank(query: Sequence[str], candidates: Iterable[str], index: CentroidIndex,
         emb: DualEmbedding, variant: SpacePair | str = SpacePair.IN_OUT,
         query_id: str = "") -> ScoredList:
    """Order ``candidates`` by DESM score; undefined ones go last by doc id."""
    cands = list(dict.fromkeys(candidates))
    if not cands:
        return ScoredList(query_id=query_id)
    for d in cands:
        if d not in index:
            raise KeyError(f"candidate not in index: {d!r}")
    all_scores = score_all(query, index, emb, variant)
    scores = np.array([all_scores[index.row_of[d]] if d in index.row_of else np.nan
                       for d in cands])
    return rank_scores(query_id, cands, scores)


def save_index(index: CentroidIndex, path: str | Path) -> None:
    """Binary layout: header, doc id table (indexed then skipped), row-major float64 centroids."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, index.vocab_size, index.dim, len(index.doc_ids),
                              len(index.skipped_docs), 0 if index.space is Space.IN else 1))
        for d in list(index.doc_ids) + list(index.skipped_docs):
            raw = d.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(index.centroids, dtype="<f8").tobytes())


def load_index(path: str | Path) -> CentroidIndex:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated centroid index")
    magic, vocab_size, dim, n_docs, n_skipped, space_tag = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC or space_tag not in (0, 1):
        raise ValueError(f"{path}: not a centroid index file")
    pos = _HEADER.size
    ids = []
    for _ in range(n_docs + n_skipped):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        ids.append(data[pos:pos + n].decode("utf-8"))
        pos += n
    expected = n_docs * dim * 8
    if len(data) - pos != expected:
        raise ValueError(f"{path}: expected {expected} bytes of centroids, found {len(data) - pos}")
    centroids = np.frombuffer(data, dtype="<f8", offset=pos).reshape(n_docs, dim).astype(np.float64)
    return CentroidIndex(space=Space.IN if space_tag == 0 else Space.OUT, doc_ids=ids[:n_docs],
                         centroids=centroids, skipped_docs=ids[n_docs:], vocab_size=vocab_size)
