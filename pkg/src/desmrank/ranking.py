"""Scored candidate lists shared by every scorer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


@dataclass
class ScoredList:
    """Candidates ordered by descending score, ties by ascending doc id.

    A score of ``None`` means undefined; those documents come last, by doc id.
    """

    query_id: str
    items: List[Tuple[str, Optional[float]]] = field(default_factory=list)

    def doc_ids(self) -> List[str]:
        return [d for d, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)


def order(doc_ids: Sequence[str], scores: np.ndarray) -> np.ndarray:
    """Permutation sorting by (defined first, score desc, doc id asc).

    NaN marks an undefined score.
    """
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.asarray(doc_ids, dtype=object)
    # rank of each doc id in lexicographic order, as an integer sort key
    id_rank = np.empty(len(ids), dtype=np.int64)
    id_rank[np.argsort(ids.astype(str), kind="stable")] = np.arange(len(ids))
    undefined = np.isnan(scores)
    key = np.where(undefined, 0.0, -scores)
    return np.lexsort((id_rank, key, undefined))


def rank_scores(query_id: str, doc_ids: Sequence[str], scores: np.ndarray) -> ScoredList:
    if len(doc_ids) != len(scores):
        raise ValueError("doc_ids and scores differ in length")
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("duplicate doc ids in candidate set")
    perm = order(doc_ids, scores)
    items = []
    for i in perm:
        s = float(scores[i])
        items.append((doc_ids[i], None if np.isnan(s) else s))
    return ScoredList(query_id=query_id, items=items)
