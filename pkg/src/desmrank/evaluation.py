"""NDCG evaluation, paired significance and candidate-set construction.

File formats (whitespace separated)::

    qrels:  qid 0 docid grade
    run:    qid Q0 docid rank score tag
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from desmrank.ranking import ScoredList

DEFAULT_CUTOFFS = (1, 3, 10)
GRADED_MAX = 4  # Bad=0 .. Perfect=4


class Judgments:
    """Graded relevance labels per (query, document)."""

    def __init__(self, labels: Mapping[str, Mapping[str, int]] | None = None,
                 max_grade: int = GRADED_MAX):
        self.max_grade = max_grade
        self._labels: Dict[str, Dict[str, int]] = {}
        for qid, docs in (labels or {}).items():
            for doc_id, grade in docs.items():
                self.add(qid, doc_id, grade)

    def add(self, qid: str, doc_id: str, grade: int) -> None:
        grade = int(grade)
        if not 0 <= grade <= self.max_grade:
            raise ValueError(f"grade {grade} for ({qid}, {doc_id}) outside 0..{self.max_grade}")
        docs = self._labels.setdefault(qid, {})
        if doc_id in docs:
            raise ValueError(f"duplicate judgment for ({qid}, {doc_id})")
        docs[doc_id] = grade

    def queries(self) -> List[str]:
        return list(self._labels)

    def for_query(self, qid: str) -> Dict[str, int]:
        return self._labels.get(qid, {})

    def __contains__(self, qid: object) -> bool:
        return qid in self._labels

    def __len__(self) -> int:
        return sum(len(d) for d in self._labels.values())

    def all_doc_ids(self) -> List[str]:
        seen = {d for docs in self._labels.values() for d in docs}
        return sorted(seen)

    def subset(self, qids: Iterable[str]) -> "Judgments":
        return Judgments({q: self._labels[q] for q in qids if q in self._labels}, self.max_grade)


def read_qrels(path: str | Path, max_grade: int = GRADED_MAX) -> Judgments:
    j = Judgments(max_grade=max_grade)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'qid 0 docid grade'")
            j.add(parts[0], parts[2], int(parts[3]))
    return j


def write_qrels(judgments: Judgments, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid in judgments.queries():
            for doc_id, grade in judgments.for_query(qid).items():
                fh.write(f"{qid} 0 {doc_id} {grade}\n")


def _fmt_score(s: Optional[float]) -> str:
    # undefined scores sort below every real score in trec_eval-style tools
    return "-inf" if s is None else repr(float(s))


def write_run(lists: Iterable[ScoredList], path: str | Path, tag: str = "desmrank") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sl in lists:
            for rank, (doc_id, score) in enumerate(sl.items, 1):
                fh.write(f"{sl.query_id} Q0 {doc_id} {rank} {_fmt_score(score)} {tag}\n")


def read_run(path: str | Path) -> Dict[str, ScoredList]:
    """Parse a run file, ordering each query's documents by their rank column."""
    rows: Dict[str, List[Tuple[int, str, Optional[float]]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 'qid Q0 docid rank score tag'")
            score = float(parts[4])
            rows.setdefault(parts[0], []).append(
                (int(parts[3]), parts[2], None if score == -math.inf else score))
    run = {}
    for qid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        ranks = [e[0] for e in entries]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError(f"{path}: ranks for query {qid} are not 1..n")
        run[qid] = ScoredList(qid, [(d, s) for _, d, s in entries])
    return run


def dcg(grades: Sequence[int], k: int) -> float:
    return sum((2.0 ** g - 1.0) / math.log2(r + 2) for r, g in enumerate(grades[:k]))


def ndcg_at_k(ranked_doc_ids: Sequence[str], judged: Mapping[str, int], k: int) -> float:
    """NDCG@k with gain 2^g - 1 and discount log2(rank + 1).

    The ideal ordering is taken over every judged document of the query,
    retrieved or not. Unjudged documents have grade 0. A query without any
    positive grade scores 0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ideal = dcg(sorted(judged.values(), reverse=True), k)
    if ideal == 0.0:
        return 0.0
    got = dcg([judged.get(d, 0) for d in ranked_doc_ids], k)
    return got / ideal


@dataclass
class EvalReport:
    cutoffs: Tuple[int, ...]
    per_query: Dict[str, Dict[int, float]]
    skipped_queries: int = 0
    p_values: Dict[int, float] = field(default_factory=dict)

    def mean(self, k: int) -> float:
        vals = [m[k] for m in self.per_query.values()]
        return float(np.mean(vals)) if vals else 0.0

    def mean_x100(self, k: int) -> float:
        return round(100.0 * self.mean(k), 2)

    def per_query_values(self, k: int, qids: Sequence[str] | None = None) -> np.ndarray:
        qids = list(self.per_query) if qids is None else qids
        return np.array([self.per_query[q][k] for q in qids])

    def table(self, name: str = "run") -> str:
        head = f"{'model':<24}" + "".join(f"{'NDCG@' + str(k):>12}" for k in self.cutoffs)
        cells = []
        for k in self.cutoffs:
            star = "*" if self.p_values.get(k, 1.0) < 0.05 else ""
            cells.append(f"{self.mean_x100(k):.2f}{star}".rjust(12))
        return head + "\n" + f"{name:<24}" + "".join(cells)

    def key_values(self) -> str:
        lines = [f"queries={len(self.per_query)}", f"skipped_queries={self.skipped_queries}"]
        for k in self.cutoffs:
            lines.append(f"ndcg@{k}={self.mean_x100(k):.2f}")
        for k in self.cutoffs:
            if k in self.p_values:
                lines.append(f"p@{k}={self.p_values[k]:.6g}")
        return "\n".join(lines)


def evaluate_run(run: Mapping[str, ScoredList] | Mapping[str, Sequence[str]], judgments: Judgments,
                 cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
                 baseline: Optional[Mapping] = None) -> EvalReport:
    """Per-query and mean NDCG; queries without judgments are skipped and counted.

    With ``baseline``, a paired t-test p-value per cutoff is attached
    (over the queries both runs cover).
    """
    if not run:
        raise ValueError("empty run")
    cutoffs = tuple(sorted(set(int(k) for k in cutoffs)))
    per_query: Dict[str, Dict[int, float]] = {}
    skipped = 0
    for qid in sorted(run):
        if qid not in judgments:
            skipped += 1
            continue
        ranked = _doc_ids(run[qid])
        judged = judgments.for_query(qid)
        per_query[qid] = {k: ndcg_at_k(ranked, judged, k) for k in cutoffs}
    report = EvalReport(cutoffs=cutoffs, per_query=per_query, skipped_queries=skipped)
    if baseline is not None:
        base = evaluate_run(baseline, judgments, cutoffs)
        common = sorted(set(per_query) & set(base.per_query))
        if len(common) >= 2:
            for k in cutoffs:
                report.p_values[k] = paired_significance(
                    report.per_query_values(k, common), base.per_query_values(k, common))
    return report


def _doc_ids(entry) -> List[str]:
    if isinstance(entry, ScoredList):
        return entry.doc_ids()
    return list(entry)


def paired_significance(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided paired t-test p-value for per-query metrics ``a`` vs ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have the same length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two paired observations")
    diff = a - b
    if np.all(diff == 0):
        return 1.0
    sd = float(np.std(diff, ddof=1))
    mean = float(np.mean(diff))
    if sd == 0.0:
        return 0.0
    t = mean / (sd / math.sqrt(n))
    return float(2.0 * stats.t.sf(abs(t), df=n - 1))


def make_candidate_sets(mode: str, judgments: Judgments,
                        all_doc_ids: Iterable[str]) -> Dict[str, List[str]]:
    """Per-query candidates: the judged documents (``telescoped``) or the whole collection (``full``)."""
    if mode == "telescoped":
        return {q: sorted(judgments.for_query(q)) for q in judgments.queries()}
    if mode == "full":
        every = sorted(set(all_doc_ids) | set(judgments.all_doc_ids()))
        return {q: every for q in judgments.queries()}
    raise ValueError(f"unknown candidate mode {mode!r}; expected 'telescoped' or 'full'")
