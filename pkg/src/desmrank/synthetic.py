"""Synthetic topical corpora and relevance data for desk-scale experiments.

Vocabulary: ``n_topics`` disjoint blocks of content words (``t{topic}w{j}``)
plus shared function words (``fn{j}``). The first ``queries_per_topic``
words of each block serve as query terms; document bodies draw only from
the remaining "body" words so that a query term appears in a document only
when planted there.

Relevance data for a query term ``q`` of topic ``T``:

* relevant: a topic-``T`` body with ``q`` planted 1-3 times (grade 1-3)
* judged irrelevant: a body from another topic with ``q`` planted the same
  way (the term is mentioned, the document is not about it; grade 0)
* everything else in the collection is unjudged: other queries' documents
  and background documents without any query term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from desmrank.evaluation import Judgments


@dataclass(frozen=True)
class TopicModel:
    n_topics: int = 5
    words_per_topic: int = 20
    n_function_words: int = 30
    queries_per_topic: int = 8
    content_prob: float = 0.6

    def __post_init__(self) -> None:
        if not 0 < self.queries_per_topic < self.words_per_topic:
            raise ValueError("queries_per_topic must leave some body words")

    def topic_words(self, t: int) -> List[str]:
        return [f"t{t}w{j:02d}" for j in range(self.words_per_topic)]

    def query_words(self, t: int) -> List[str]:
        return self.topic_words(t)[:self.queries_per_topic]

    def body_words(self, t: int) -> List[str]:
        return self.topic_words(t)[self.queries_per_topic:]

    @property
    def function_words(self) -> List[str]:
        return [f"fn{j:02d}" for j in range(self.n_function_words)]

    def topic_of(self, word: str) -> int | None:
        if word.startswith("t") and "w" in word:
            return int(word[1:word.index("w")])
        return None

    def _mix(self, pool: Sequence[str], length: int, rng: np.random.Generator) -> List[str]:
        fn = self.function_words
        content = rng.random(length) < self.content_prob
        picks_c = rng.integers(0, len(pool), size=length)
        picks_f = rng.integers(0, len(fn), size=length)
        return [pool[c] if is_c else fn[f] for is_c, c, f in zip(content, picks_c, picks_f)]

    def sentence(self, rng: np.random.Generator, length_range: Tuple[int, int] = (8, 12)) -> List[str]:
        t = int(rng.integers(self.n_topics))
        length = int(rng.integers(length_range[0], length_range[1] + 1))
        return self._mix(self.topic_words(t), length, rng)

    def passage(self, topic: int, length: int, rng: np.random.Generator) -> List[str]:
        """Body text about ``topic`` containing no query term."""
        return self._mix(self.body_words(topic), length, rng)


def training_corpus(model: TopicModel, n_sentences: int, seed: int) -> List[List[str]]:
    rng = np.random.default_rng(seed)
    return [model.sentence(rng) for _ in range(n_sentences)]


def plant(tokens: List[str], word: str, times: int, rng: np.random.Generator) -> List[str]:
    """Insert ``word`` ``times`` times at random positions."""
    out = list(tokens)
    for _ in range(times):
        out.insert(int(rng.integers(0, len(out) + 1)), word)
    return out


@dataclass
class RelevanceDataset:
    docs: Dict[str, List[str]]
    queries: Dict[str, List[str]]
    judgments: Judgments
    query_topic: Dict[str, int]
    train_queries: List[str] = field(default_factory=list)
    test_queries: List[str] = field(default_factory=list)

    def doc_items(self) -> List[Tuple[str, List[str]]]:
        return sorted(self.docs.items())


def make_relevance_dataset(model: TopicModel, seed: int, n_relevant: int = 6,
                           n_judged_irrelevant: int = 14, n_background: int = 400,
                           doc_length: Tuple[int, int] = (30, 60),
                           max_planted: int = 3) -> RelevanceDataset:
    """Queries, judged documents and an unjudged background collection.

    Queries alternate between the training and test split within each topic.
    """
    rng = np.random.default_rng(seed)
    raw_docs: List[List[str]] = []
    labels: List[Tuple[str, int, int]] = []  # (qid, doc index, grade)
    queries: Dict[str, List[str]] = {}
    query_topic: Dict[str, int] = {}
    train, test = [], []

    def body(topic: int) -> List[str]:
        return model.passage(topic, int(rng.integers(doc_length[0], doc_length[1] + 1)), rng)

    qn = 0
    for t in range(model.n_topics):
        for j, q in enumerate(model.query_words(t)):
            qid = f"q{qn:03d}"
            qn += 1
            queries[qid] = [q]
            query_topic[qid] = t
            (train if j % 2 == 0 else test).append(qid)
            for _ in range(n_relevant):
                doc = plant(body(t), q, int(rng.integers(1, max_planted + 1)), rng)
                labels.append((qid, len(raw_docs), int(rng.integers(1, 4))))
                raw_docs.append(doc)
            others = [u for u in range(model.n_topics) if u != t]
            for _ in range(n_judged_irrelevant):
                other = others[int(rng.integers(len(others)))]
                doc = plant(body(other), q, int(rng.integers(1, max_planted + 1)), rng)
                labels.append((qid, len(raw_docs), 0))
                raw_docs.append(doc)
    for _ in range(n_background):
        raw_docs.append(body(int(rng.integers(model.n_topics))))

    # shuffled ids so that doc-id tie breaking carries no relevance signal
    perm = rng.permutation(len(raw_docs))
    name = [f"d{int(p):05d}" for p in perm]
    docs = {name[i]: toks for i, toks in enumerate(raw_docs)}
    judgments = Judgments()
    for qid, i, grade in labels:
        judgments.add(qid, name[i], grade)
    return RelevanceDataset(docs=docs, queries=queries, judgments=judgments,
                            query_topic=query_topic, train_queries=train, test_queries=test)
