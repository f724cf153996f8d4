import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from desmrank.analysis import (CLASSES, JUDGED_IRRELEVANT, RANDOM_IRRELEVANT, RELEVANT,
                               classify_scores, pca_2d, perturbation_report, project_2d,
                               relevance_class, score_distributions, write_histograms_tsv)
from desmrank.evaluation import Judgments

from oracles import make_embedding


def _emb(rng):
    words = ["city", "river", "college", "giraffe", "the", "of"]
    return make_embedding(words, rng.normal(size=(6, 5)), rng.normal(size=(6, 5)))


def test_query_only_passage(rng):
    rows = perturbation_report([("p", "city city city")], "city", _emb(rng))
    assert rows[0].term_frequency == 3
    assert rows[0].in_in == pytest.approx(1.0)


def test_oov_replacement_keeps_term_frequency(rng):
    emb = _emb(rng)
    rows = perturbation_report([("orig", "the city of the river"),
                                ("swap", "the city of the zzzzz")], "city", emb)
    assert rows[0].term_frequency == rows[1].term_frequency == 1
    assert rows[0].in_out != rows[1].in_out


def test_passage_without_known_words_is_undefined(rng):
    rows = perturbation_report([("p", "qqq rrr")], "city", _emb(rng))
    assert rows[0].in_out is None and rows[0].in_in is None
    assert rows[0].term_frequency == 0


def test_unknown_query_is_an_error(rng):
    with pytest.raises(KeyError, match="cambridge"):
        perturbation_report([("p", "city")], "cambridge", _emb(rng))


@given(st.lists(st.sampled_from(["city", "river", "the", "zzz", "City,"]), max_size=30))
def test_term_frequency_is_a_raw_count(tokens):
    emb = make_embedding(["city", "river", "the"], np.eye(3), np.eye(3)[::-1])
    text = " ".join(tokens) or "river"
    rows = perturbation_report([("p", text)], "city", emb)
    assert rows[0].term_frequency == sum(1 for t in text.split() if t.lower().strip(",") == "city")


def test_pca_preserves_distances_of_planar_points(rng):
    pts = rng.normal(size=(20, 2))
    coords = pca_2d(pts).coords
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d1 = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
    assert np.abs(d0 - d1).max() < 1e-8


def test_pca_rotated_square():
    theta = 0.3
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    square = np.array([[1, 1], [1, -1], [-1, -1], [-1, 1.0]]) @ rot.T
    res = pca_2d(square)
    assert np.allclose(np.sort(np.linalg.norm(res.coords, axis=1)), np.sqrt(2))


def test_pca_identical_points_warns():
    with pytest.warns(UserWarning):
        res = pca_2d(np.ones((5, 4)))
    assert not res.coords.any()
    with pytest.raises(ValueError):
        pca_2d(np.ones((2, 4)))


def test_pca_variance_matches_eigendecomposition(rng):
    x = rng.normal(size=(50, 10)) * np.arange(1, 11)
    res = pca_2d(x)
    evals = np.linalg.eigh(np.cov(x, rowvar=False))[0][::-1]
    assert np.allclose(res.explained_variance, evals[:2], rtol=1e-6)
    assert res.explained_variance[0] >= res.explained_variance[1]
    assert np.allclose(res.coords.var(axis=0, ddof=1), evals[:2], rtol=1e-6)


def test_projection_puts_queries_at_one_point(rng):
    groups = []
    for q in range(3):
        qv = rng.normal(size=4)
        groups.append((f"q{q}", qv, [(qv.copy(), RELEVANT), (rng.normal(size=4), RANDOM_IRRELEVANT)]))
    export = project_2d(groups)
    qpts = [(x, y) for _, kind, _, x, y in export.rows if kind == "query"]
    assert len(qpts) == 3
    assert np.allclose(qpts, qpts[0])
    # a document equal to its query lands on the query point
    same = [(x, y) for _, kind, label, x, y in export.rows if label == RELEVANT]
    assert np.allclose(same, qpts[0])


def test_relevance_classes():
    assert relevance_class(None) == RANDOM_IRRELEVANT
    assert relevance_class(3) == RELEVANT
    assert relevance_class(1) == JUDGED_IRRELEVANT
    j = Judgments({"q": {"a": 3, "b": 0}})
    out = classify_scores({"q": {"a": 0.9, "b": 0.1, "c": 0.5, "d": None}}, j)
    assert out == {RELEVANT: [0.9], JUDGED_IRRELEVANT: [0.1], RANDOM_IRRELEVANT: [0.5]}


def test_single_score_per_class():
    hist = score_distributions({"f": {RELEVANT: [0.5], JUDGED_IRRELEVANT: [0.2],
                                      RANDOM_IRRELEVANT: [0.9]}}, bins=10)[0]
    for c in CLASSES:
        assert hist.counts[c].sum() == 1
        assert hist.variance[c] == 0.0


def test_identical_lists_give_identical_histograms(rng):
    s = rng.normal(size=200).tolist()
    hist = score_distributions({"f": {RELEVANT: s, RANDOM_IRRELEVANT: list(s)}})[0]
    assert np.array_equal(hist.counts[RELEVANT], hist.counts[RANDOM_IRRELEVANT])


def test_shifted_distributions(rng):
    a = rng.normal(0.0, 1.0, 2000)
    b = rng.normal(0.5, 1.0, 2000)
    hist = score_distributions({"f": {RELEVANT: b, JUDGED_IRRELEVANT: a}}, bins=30)[0]
    se = np.sqrt(hist.variance[RELEVANT] / 2000 + hist.variance[JUDGED_IRRELEVANT] / 2000)
    assert abs(hist.mean[RELEVANT] - hist.mean[JUDGED_IRRELEVANT] - 0.5) < 3 * se
    assert hist.counts[RELEVANT].sum() == 2000
    assert len(hist.edges) == 31


def test_empty_class_warns(tmp_path):
    with pytest.warns(UserWarning, match="empty"):
        hists = score_distributions({"f": {RELEVANT: [0.1, 0.2], JUDGED_IRRELEVANT: []}})
    assert hists[0].sizes[JUDGED_IRRELEVANT] == 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        write_histograms_tsv(hists, tmp_path / "h.tsv")
    text = (tmp_path / "h.tsv").read_text()
    assert text.startswith("feature\tclass\tbin_lo\tbin_hi\tcount\n")
