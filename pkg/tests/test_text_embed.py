import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raea.kg import KnowledgeGraph, partition_channels, ChannelKind
from raea.text_embed import (EmbeddingFormatError, Embedder, HashNGramConfig, embed_attributes,
                             embed_string, entity_name_vectors, load_precomputed, ngrams)

from conftest import write


def test_hash_buckets_frozen():
    # computed with an independent blake2b implementation of the documented scheme
    v = embed_string("abc")
    nz = np.nonzero(v)[0]
    assert nz.tolist() == [23, 32, 65]
    np.testing.assert_allclose(v[nz] * np.sqrt(3), [-1, 1, -1], atol=1e-12)


def test_near_duplicates_closer_than_unrelated():
    a, b, c = embed_string("crampons"), embed_string("crampon"), embed_string("yoga mat")
    assert a @ b == pytest.approx(0.8894991799933216, abs=1e-12)
    assert a @ c == pytest.approx(-0.0668153104781061, abs=1e-12)
    assert a @ b > a @ c


def test_deterministic_and_empty():
    assert np.array_equal(embed_string("abc"), embed_string("abc"))
    assert not embed_string("").any()


def test_normalisation_case_and_whitespace():
    assert np.array_equal(embed_string("Ice  Climbing"), embed_string("ice climbing"))


def test_short_string_is_one_gram():
    assert ngrams("a", 2, 4) == ["a"]
    assert ngrams("", 2, 4) == []


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1, max_size=30).filter(lambda s: s.strip()))
def test_unit_norm(s):
    v = embed_string(s)
    n = np.linalg.norm(v)
    # opposite-signed grams can cancel exactly
    assert n == 0 or abs(n - 1) < 1e-6


def test_seed_changes_hash():
    assert not np.array_equal(embed_string("crampons"), embed_string("crampons", HashNGramConfig(hash_seed=1)))


def test_precomputed_table(tmp_path, caplog):
    t = load_precomputed(write(tmp_path / "e", "white\t1 0 0 0\nblack\t0 1 0 0\n"))
    assert t.dim == 4 and len(t) == 2
    with caplog.at_level(logging.WARNING):
        t = load_precomputed(write(tmp_path / "d", "white\t1 0 0 0\nwhite\t0 0 0 1\n"))
    assert t.get("white").tolist() == [0, 0, 0, 1]
    assert "duplicate" in caplog.text
    with pytest.raises(EmbeddingFormatError, match=":2:"):
        load_precomputed(write(tmp_path / "bad", "a\t1 0 0 0\nb\t1 0 0\n"))


def test_embedder_falls_back_to_hash(tmp_path):
    t = load_precomputed(write(tmp_path / "e", "white\t" + " ".join(["0.5"] * 128) + "\n"))
    emb = Embedder(t)
    assert emb("WHITE").tolist() == [0.5] * 128
    assert np.array_equal(emb("green"), embed_string("green"))


def test_attribute_features():
    g = KnowledgeGraph()
    g.add_attribute("e1", "color", "White")
    g.add_attribute("e2", "color", "Black")
    emb = Embedder()
    f = embed_attributes(partition_channels(g)[ChannelKind.LITERAL], emb)
    assert np.array_equal(f.attr[0], emb("color")) and np.array_equal(f.attr[0], f.attr[1])
    assert np.array_equal(f.value[0], emb("White"))
    empty = embed_attributes(partition_channels(g)[ChannelKind.DIGITAL], emb)
    assert len(empty) == 0 and empty.attr.shape == (0, 128)


def test_name_vectors_average_and_zero():
    g = KnowledgeGraph()
    g.add_attribute("e1", "name", "hook")
    g.add_attribute("e1", "name", "gravity hook")
    g.add_attribute("e2", "color", "White")
    emb = Embedder()
    v = entity_name_vectors(g, ["name"], emb)
    np.testing.assert_allclose(v[0], (emb("hook") + emb("gravity hook")) / 2)
    assert not v[1].any()
