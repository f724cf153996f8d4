"""Linear DESM + BM25 mixture and the alpha grid sweep."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from desmrank.embeddings import SpacePair
from desmrank.evaluation import Judgments, ndcg_at_k
from desmrank.lexical import Bm25Config
from desmrank.ranking import ScoredList, order, rank_scores


@dataclass(frozen=True)
class MixtureConfig:
    alpha: float = 0.5
    desm_variant: SpacePair = SpacePair.IN_OUT
    bm25: Bm25Config = Bm25Config()

    def __post_init__(self) -> None:
        _check_alpha(self.alpha)
        object.__setattr__(self, "desm_variant", SpacePair.parse(self.desm_variant))


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")


def mm_score(desm: Optional[float], bm25: float, alpha: float) -> Optional[float]:
    """alpha * DESM + (1 - alpha) * BM25 on raw scores.

    An undefined DESM drops its term; at alpha == 1 that leaves nothing and
    the mixture is undefined too.
    """
    _check_alpha(alpha)
    if desm is None:
        return None if alpha == 1.0 else (1.0 - alpha) * bm25
    return alpha * desm + (1.0 - alpha) * bm25


def mm_scores(desm: np.ndarray, bm25: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized :func:`mm_score`; NaN in ``desm`` means undefined."""
    _check_alpha(alpha)
    desm = np.asarray(desm, dtype=np.float64)
    bm25 = np.asarray(bm25, dtype=np.float64)
    out = alpha * desm + (1.0 - alpha) * bm25
    undefined = np.isnan(desm)
    if alpha < 1.0:
        out[undefined] = (1.0 - alpha) * bm25[undefined]
    return out


@dataclass
class QueryComponents:
    """Both component scores for one query's candidate set."""

    query_id: str
    doc_ids: List[str]
    desm: np.ndarray
    bm25: np.ndarray

    def __post_init__(self) -> None:
        self.desm = np.asarray(self.desm, dtype=np.float64)
        self.bm25 = np.asarray(self.bm25, dtype=np.float64)
        if not len(self.doc_ids) == len(self.desm) == len(self.bm25):
            raise ValueError("doc_ids, desm and bm25 must align")

    def rank(self, alpha: float) -> ScoredList:
        return rank_scores(self.query_id, self.doc_ids, mm_scores(self.desm, self.bm25, alpha))


@dataclass
class SweepResult:
    best_alpha: float
    alphas: np.ndarray
    values: np.ndarray


def alpha_grid(step: float = 0.01) -> np.ndarray:
    if not 0 < step <= 1:
        raise ValueError("step must be in (0, 1]")
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError("step must divide 1 evenly")
    # i / n rather than i * step keeps grid points exact decimals (0.07, not 0.07000000000000001)
    return np.array([i / n for i in range(n + 1)])


def sweep_alpha(queries: Sequence[QueryComponents], judgments: Judgments, step: float = 0.01,
                k: int = 10) -> SweepResult:
    """Grid-search alpha on training queries, maximizing mean NDCG@k.

    Ties go to the smaller alpha.
    """
    judged = [q for q in queries if q.query_id in judgments
              and any(d in judgments.for_query(q.query_id) for d in q.doc_ids)]
    if not judged:
        raise ValueError("no judged candidates to tune alpha on")
    alphas = alpha_grid(step)
    values = np.empty(len(alphas))
    for i, a in enumerate(alphas):
        per_q = []
        for q in judged:
            perm = order(q.doc_ids, mm_scores(q.desm, q.bm25, float(a)))
            ranked = [q.doc_ids[j] for j in perm[:k]]
            per_q.append(ndcg_at_k(ranked, judgments.for_query(q.query_id), k))
        values[i] = float(np.mean(per_q))
    best = int(np.argmax(values))  # first maximum == smallest alpha
    return SweepResult(best_alpha=float(alphas[best]), alphas=alphas, values=values)
