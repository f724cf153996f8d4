import time
from dataclasses import dataclass
from typing import List

import numpy as np
import pytest

from desmrank.cbow import TrainerConfig, train
from desmrank.corpus import Vocabulary, build_vocabulary
from desmrank.embeddings import DualEmbedding
from desmrank.synthetic import TopicModel, training_corpus

# Acceptance-scale training setup: topical corpus, d=32, window 5, 5 negatives, 5 epochs.
TOPIC_MODEL = TopicModel()
TRAIN_SENTENCES = 50_000
TRAIN_CONFIG = TrainerConfig(dim=32, window=5, negatives=5, epochs=5, seed=7)

_ACCEPTANCE: List[tuple] = []


@dataclass
class TrainedModel:
    topics: TopicModel
    vocab: Vocabulary
    emb: DualEmbedding
    epoch_losses: List[float]
    seconds: float


@pytest.fixture(scope="session")
def trained() -> TrainedModel:
    start = time.perf_counter()
    records = training_corpus(TOPIC_MODEL, TRAIN_SENTENCES, seed=3)
    vocab = build_vocabulary(records, min_count=5)
    losses: List[float] = []
    emb = train(records, vocab, TRAIN_CONFIG, on_epoch=lambda e, l: losses.append(l))
    return TrainedModel(TOPIC_MODEL, vocab, emb, losses, time.perf_counter() - start)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _ACCEPTANCE.append((marker.args[0], status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in _ACCEPTANCE:
        line = f"ACCEPTANCE {name}: {status}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
