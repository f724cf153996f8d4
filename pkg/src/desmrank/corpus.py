"""Tokenization, corpus streaming and the shared vocabulary."""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np

DEFAULT_MIN_COUNT = 5

_STRIP = string.punctuation


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace and strip ASCII punctuation from token edges.

    Tokens that are punctuation only are dropped. Inner punctuation
    ("camel-like", "giraffe's") is kept.
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP)
        if tok:
            out.append(tok)
    return out


def read_records(path: str | Path) -> Iterator[List[str]]:
    """Yield one token list per line of a UTF-8 text file."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            yield tokenize(line)


def read_keyed_records(path: str | Path) -> Iterator[Tuple[str, str]]:
    """Yield ``(key, text)`` from lines shaped ``key<TAB>text``.

    Used for both document and query files. Blank lines are skipped.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            key, sep, text = line.partition("\t")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected '<id>\\t<text>'")
            yield key.strip(), text


@dataclass(frozen=True)
class Vocabulary:
    """Immutable term <-> id mapping with corpus counts.

    Ids are dense and ordered by descending count, ties broken
    lexicographically.
    """

    terms: Tuple[str, ...]
    counts: np.ndarray
    total_tokens: int
    id_of: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "id_of", {t: i for i, t in enumerate(self.terms)})
        if len(self.id_of) != len(self.terms):
            raise ValueError("duplicate terms in vocabulary")
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if counts.shape != (len(self.terms),):
            raise ValueError("counts must have one entry per term")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, token: object) -> bool:
        return token in self.id_of

    def count_of(self, term_id: int) -> int:
        return int(self.counts[term_id])

    def encode(self, tokens: Sequence[str]) -> Tuple[List[int], int]:
        return encode(tokens, self)

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.terms[i] for i in ids]


def vocabulary_from_counts(counts: Dict[str, int] | Counter, min_count: int = 1,
                           total_tokens: int | None = None) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    kept = sorted(((t, c) for t, c in counts.items() if c >= min_count),
                  key=lambda tc: (-tc[1], tc[0]))
    if total_tokens is None:
        total_tokens = sum(counts.values())
    return Vocabulary(
        terms=tuple(t for t, _ in kept),
        counts=np.array([c for _, c in kept], dtype=np.int64),
        total_tokens=int(total_tokens),
    )


def build_vocabulary(records: Iterable[Sequence[str]],
                     min_count: int = DEFAULT_MIN_COUNT) -> Vocabulary:
    """Single pass count over ``records``; keeps terms seen at least ``min_count`` times.

    ``total_tokens`` counts every token scanned, including the ones that
    fall below the threshold.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    for rec in records:
        counts.update(rec)
    return vocabulary_from_counts(counts, min_count)


def encode(tokens: Sequence[str], vocab: Vocabulary) -> Tuple[List[int], int]:
    """Map tokens to ids, dropping (and counting) out-of-vocabulary tokens."""
    ids = []
    oov = 0
    lookup = vocab.id_of
    for tok in tokens:
        i = lookup.get(tok)
        if i is None:
            oov += 1
        else:
            ids.append(i)
    return ids, oov


def encode_corpus(records: Iterable[Sequence[str]],
                  vocab: Vocabulary) -> Tuple[np.ndarray, np.ndarray]:
    """Flatten encoded records into ``(ids, offsets)``.

    Record ``r`` occupies ``ids[offsets[r]:offsets[r + 1]]``. OOV tokens are
    removed before windowing, as in the reference word2vec tool.
    """
    chunks: List[List[int]] = []
    lengths = [0]
    for rec in records:
        ids, _ = encode(rec, vocab)
        chunks.append(ids)
        lengths.append(len(ids))
    offsets = np.cumsum(np.asarray(lengths, dtype=np.int64))
    flat = np.fromiter((i for c in chunks for i in c), dtype=np.int64, count=int(offsets[-1]))
    return flat, offsets
