import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from desmrank import embeddings
from desmrank.embeddings import (SpacePair, ZeroVectorError, cosine, load,
                                 nearest_neighbors, save)

from oracles import make_embedding

vec3 = arrays(np.float64, 3, elements=st.floats(-1e3, 1e3, allow_nan=False))


def test_cosine_examples():
    assert cosine([1, 0], [1, 0]) == 1.0
    assert cosine([1, 0], [0, 1]) == 0.0
    assert cosine([1, 0], [-1, 0]) == -1.0
    with mp.workdps(40):
        expected = mp.mpf(-12) / (mp.sqrt(14) * mp.sqrt(77))
    assert cosine([1, 2, 3], [-4, 5, -6]) == pytest.approx(float(expected), abs=1e-15)


def test_cosine_zero_vector_is_an_error():
    with pytest.raises(ZeroVectorError):
        cosine([0, 0, 0], [1, 2, 3])


@given(vec3, vec3, st.floats(1e-3, 1e3))
def test_cosine_symmetry_scale_and_range(u, v, c):
    assume(np.linalg.norm(u) > 1e-3 and np.linalg.norm(v) > 1e-3)
    s = cosine(u, v)
    assert -1.0 <= s <= 1.0
    assert s == pytest.approx(cosine(v, u), abs=1e-12)
    assert s == pytest.approx(cosine(c * u, v), abs=1e-12)


def test_space_pair_parse():
    assert SpacePair.parse("in-out") is SpacePair.IN_OUT
    assert SpacePair.parse("OUT_IN") is SpacePair.OUT_IN
    assert SpacePair.IN_IN.label == "in-in"
    with pytest.raises(ValueError):
        SpacePair.parse("in-sideways")


def _toy():
    words = ["w0", "w1", "w2", "w3", "w4"]
    w_in = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [-1.0, 0.2], [0.5, 0.5]])
    w_out = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0], [-1.0, -1.0]])
    return make_embedding(words, w_in, w_out)


def test_neighbors_brute_force():
    emb = _toy()
    for pair in SpacePair:
        q = emb.vector("w1", pair.first)
        m = emb.matrix(pair.second)
        sims = []
        for i, w in enumerate(emb.vocab.terms):
            if np.linalg.norm(m[i]) > 0:
                sims.append((-cosine(q, m[i]), i, w))
        expected = [w for _, _, w in sorted(sims)]
        got = nearest_neighbors("w1", pair, 5, emb)
        assert [w for w, _ in got] == expected[:5]
        assert all(a[1] >= b[1] for a, b in zip(got, got[1:]))


def test_neighbors_prefix_property():
    emb = _toy()
    full = nearest_neighbors("w0", "in-out", 5, emb)
    for k in range(1, 5):
        assert nearest_neighbors("w0", "in-out", k, emb) == full[:k]


def test_same_space_neighbor_of_word_is_itself():
    emb = _toy()
    word, sim = nearest_neighbors("w2", "in-in", 1, emb)[0]
    assert word == "w2" and sim == pytest.approx(1.0)


def test_neighbor_ties_break_by_vocabulary_id():
    emb = make_embedding(["a", "b", "c"], [[1.0, 0.0], [2.0, 0.0], [1.0, 0.0]])
    assert [w for w, _ in nearest_neighbors("c", "in-in", 3, emb)] == ["a", "b", "c"]


def test_neighbors_errors():
    emb = _toy()
    with pytest.raises(KeyError, match="zebra"):
        nearest_neighbors("zebra", "in-out", 3, emb)
    with pytest.raises(ZeroVectorError):
        nearest_neighbors("w3", "out-in", 3, emb)
    with pytest.raises(ValueError):
        nearest_neighbors("w0", "in-out", 0, emb)


def test_embedding_validation_and_immutability():
    emb = _toy()
    with pytest.raises(ValueError):
        emb.w_in[0, 0] = 5.0
    with pytest.raises(ValueError):
        make_embedding(["a", "b"], np.zeros((2, 3)), np.zeros((2, 4)))


def test_save_load_round_trip(tmp_path, rng):
    words = [f"t{i}" for i in range(30)]
    w_in = rng.normal(size=(30, 7)) * 10.0 ** rng.integers(-8, 8, size=(30, 7))
    w_in[0, 0] = 1 / 3
    w_in[1, 1] = -0.0
    w_out = rng.normal(size=(30, 7))
    emb = make_embedding(words, w_in, w_out)
    p_in, p_out = save(emb, tmp_path / "m")
    back = load(p_in, p_out, tmp_path / "m.vocab")
    assert back.vocab.terms == emb.vocab.terms
    assert back.vocab.counts.tolist() == [1] * 30
    assert back.w_in.tobytes() == emb.w_in.tobytes()
    assert back.w_out.tobytes() == emb.w_out.tobytes()
    # without the vocab sidecar counts are unknown
    assert load(p_in, p_out).vocab.counts.tolist() == [0] * 30


def test_load_restrict_to(tmp_path, rng):
    emb = make_embedding(["a", "b", "c"], rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
    p_in, p_out = save(emb, tmp_path / "m")
    sub = load(p_in, p_out, restrict_to={"c", "a"})
    assert sub.vocab.terms == ("a", "c")
    assert np.array_equal(sub.w_in, emb.w_in[[0, 2]])


def test_load_detects_mismatched_word_order(tmp_path):
    (tmp_path / "i.vec").write_text("2 2\na 1 2\nb 3 4\n")
    (tmp_path / "o.vec").write_text("2 2\nb 1 2\na 3 4\n")
    with pytest.raises(ValueError, match="differ"):
        load(tmp_path / "i.vec", tmp_path / "o.vec")


def test_vec_format_parsing(tmp_path):
    good = tmp_path / "g.vec"
    good.write_text("3 4\nx 1 2 3 4\ny 0 0 0 1\nz -1 0.5 2e-3 7\n")
    emb = load(good, good)
    assert emb.w_in.shape == (3, 4)
    assert emb.vector("z", "in").tolist() == [-1.0, 0.5, 0.002, 7.0]

    wide = tmp_path / "w.vec"
    wide.write_text("3 4\nx 1 2 3 4\ny 0 0 0 1 9\nz -1 0.5 2e-3 7\n")
    with pytest.raises(ValueError, match=":3"):
        load(wide, wide)

    header = tmp_path / "h.vec"
    header.write_text("three four\nx 1 2 3 4\n")
    with pytest.raises(ValueError, match="header"):
        load(header, header)

    short = tmp_path / "s.vec"
    short.write_text("4 4\nx 1 2 3 4\n")
    with pytest.raises(ValueError, match="4 rows"):
        load(short, short)


def test_unit_rows_keeps_zero_rows():
    m = np.array([[3.0, 4.0], [0.0, 0.0]])
    out = embeddings.unit_rows(m)
    assert out[0].tolist() == [0.6, 0.8]
    assert not out[1].any()
    assert math.isclose(float(np.linalg.norm(out[0])), 1.0)
