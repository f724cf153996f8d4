"""The dual (IN/OUT) embedding container, cosine similarity and persistence."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, List, Optional, Tuple

import numpy as np

from desmrank.corpus import Vocabulary


class ZeroVectorError(ValueError):
    """Cosine similarity requested for a zero-norm vector."""


class Space(str, enum.Enum):
    IN = "in"
    OUT = "out"


class SpacePair(enum.Enum):
    """(first space, second space) for a word-to-word comparison."""

    IN_IN = (Space.IN, Space.IN)
    OUT_OUT = (Space.OUT, Space.OUT)
    IN_OUT = (Space.IN, Space.OUT)
    OUT_IN = (Space.OUT, Space.IN)

    @property
    def first(self) -> Space:
        return self.value[0]

    @property
    def second(self) -> Space:
        return self.value[1]

    @property
    def label(self) -> str:
        return f"{self.first.value}-{self.second.value}"

    @classmethod
    def parse(cls, text: str | "SpacePair") -> "SpacePair":
        if isinstance(text, SpacePair):
            return text
        key = text.strip().lower().replace("_", "-")
        for pair in cls:
            if pair.label == key:
                return pair
        raise ValueError(f"unknown space pair {text!r}; expected one of "
                         f"{', '.join(p.label for p in cls)}")


@dataclass(frozen=True)
class DualEmbedding:
    vocab: Vocabulary
    w_in: np.ndarray
    w_out: np.ndarray

    def __post_init__(self) -> None:
        w_in = np.asarray(self.w_in, dtype=np.float64)
        w_out = np.asarray(self.w_out, dtype=np.float64)
        if w_in.ndim != 2 or w_in.shape != w_out.shape:
            raise ValueError(f"IN {w_in.shape} and OUT {w_out.shape} must be equal V x d matrices")
        if w_in.shape[0] != len(self.vocab):
            raise ValueError(f"matrices have {w_in.shape[0]} rows, vocabulary has {len(self.vocab)}")
        w_in.setflags(write=False)
        w_out.setflags(write=False)
        object.__setattr__(self, "w_in", w_in)
        object.__setattr__(self, "w_out", w_out)

    @property
    def dim(self) -> int:
        return self.w_in.shape[1]

    def matrix(self, space: Space | str) -> np.ndarray:
        return self.w_in if Space(space) is Space.IN else self.w_out

    def vector(self, word: str, space: Space | str) -> np.ndarray:
        try:
            i = self.vocab.id_of[word]
        except KeyError:
            raise KeyError(f"word not in vocabulary: {word!r}") from None
        return self.matrix(space)[i]


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u| |v|), clamped to [-1, 1].

    Raises :class:`ZeroVectorError` when either vector has zero norm; an
    undefined similarity is never reported as 0.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    c = float(u @ v) / (nu * nv)
    return min(1.0, max(-1.0, c))


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def nearest_neighbors(word: str, pair: SpacePair | str, k: int,
                      emb: DualEmbedding) -> List[Tuple[str, float]]:
    """Top-``k`` words by cosine between ``word`` in the first space and every word in the second.

    The query word itself is not filtered out. Words whose vector in the
    second space is zero have no defined similarity and are skipped.
    Ties are broken by ascending vocabulary id.
    """
    pair = SpacePair.parse(pair)
    if k < 1:
        raise ValueError("k must be >= 1")
    if word not in emb.vocab:
        raise KeyError(f"word not in vocabulary: {word!r}")
    q = emb.vector(word, pair.first)
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        raise ZeroVectorError(f"{word!r} has a zero {pair.first.value.upper()} vector")
    m = emb.matrix(pair.second)
    norms = row_norms(m)
    valid = norms > 0
    sims = np.full(m.shape[0], -np.inf)
    sims[valid] = (m[valid] @ q) / (norms[valid] * qn)
    np.clip(sims, -1.0, 1.0, out=sims, where=valid)
    order = np.argsort(-sims, kind="stable")
    out = []
    for i in order[:k]:
        if not valid[i]:
            break
        out.append((emb.vocab.terms[i], float(sims[i])))
    return out


def _write_vec(path: Path, terms, m: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for term, row in zip(terms, m.tolist()):
            # repr() is the shortest decimal that round-trips the float64
            fh.write(term + " " + " ".join(map(repr, row)) + "\n")


def save(emb: DualEmbedding, path_prefix: str | Path) -> Tuple[Path, Path]:
    """Write ``<prefix>.in.vec``, ``<prefix>.out.vec`` and ``<prefix>.vocab`` (term counts)."""
    prefix = str(path_prefix)
    p_in, p_out = Path(prefix + ".in.vec"), Path(prefix + ".out.vec")
    _write_vec(p_in, emb.vocab.terms, emb.w_in)
    _write_vec(p_out, emb.vocab.terms, emb.w_out)
    with open(prefix + ".vocab", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{emb.vocab.total_tokens}\n")
        for term, c in zip(emb.vocab.terms, emb.vocab.counts.tolist()):
            fh.write(f"{term} {c}\n")
    return p_in, p_out


def _read_vec(path: Path,
              restrict_to: Optional[Collection[str]]) -> Tuple[List[str], List[str], np.ndarray]:
    """Return (all terms in file order, kept terms, kept rows)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise ValueError(f"{path}: malformed header, expected 'V d'")
        n_rows, dim = int(header[0]), int(header[1])
        terms: List[str] = []
        kept: List[str] = []
        rows: List[List[float]] = []
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            terms.append(parts[0])
            if restrict_to is None or parts[0] in restrict_to:
                kept.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
    if len(terms) != n_rows:
        raise ValueError(f"{path}: header announces {n_rows} rows, found {len(terms)}")
    return terms, kept, np.array(rows, dtype=np.float64).reshape(len(rows), dim)


def load(path_in: str | Path, path_out: str | Path, vocab_path: str | Path | None = None,
         restrict_to: Optional[Collection[str]] = None) -> DualEmbedding:
    """Load a pair of word2vec text files sharing identical vocabulary order.

    ``vocab_path`` optionally supplies term counts (as written by
    :func:`save`); without it counts are 0. ``restrict_to`` keeps only the
    listed words, which makes very large public files tractable.
    """
    terms_in, terms, w_in = _read_vec(Path(path_in), restrict_to)
    terms_out, _, w_out = _read_vec(Path(path_out), restrict_to)
    if terms_in != terms_out:
        bad = next((i for i, (a, b) in enumerate(zip(terms_in, terms_out)) if a != b),
                   min(len(terms_in), len(terms_out)))
        raise ValueError(f"IN and OUT vocabularies differ (first mismatch at row {bad})")
    if w_in.shape != w_out.shape:
        raise ValueError(f"IN is {w_in.shape}, OUT is {w_out.shape}")

    counts = np.zeros(len(terms), dtype=np.int64)
    total = 0
    if vocab_path is not None:
        with open(vocab_path, encoding="utf-8") as fh:
            total = int(fh.readline())
            count_of = {}
            for line in fh:
                t, c = line.rsplit(" ", 1)
                count_of[t] = int(c)
        counts = np.array([count_of.get(t, 0) for t in terms], dtype=np.int64)
    vocab = Vocabulary(terms=tuple(terms), counts=counts, total_tokens=total)
    return DualEmbedding(vocab=vocab, w_in=w_in, w_out=w_out)


def unit_rows(m: np.ndarray) -> np.ndarray:
    """Row-normalized copy; zero rows stay zero."""
    n = row_norms(m)
    out = np.zeros_like(m)
    nz = n > 0
    out[nz] = m[nz] / n[nz, None]
    return out


__all__ = [
    "DualEmbedding", "Space", "SpacePair", "ZeroVectorError", "cosine", "load",
    "nearest_neighbors", "row_norms", "save", "unit_rows",
]
