from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from raea.kg import ChannelKind, load_attribute_triples, load_relation_triples, partition_channels
from raea.synth import SynthConfig, dump_pair, generate_aligned_pair, split_seeds


def _relabelled(pair):
    """kg2 triples mapped back to kg1 labels through the gold alignment."""
    back = {b: a for a, b in pair.gold.pairs}
    kg1, kg2 = pair.kg1, pair.kg2
    rel = Counter((back[t.head], kg2.relations.labels[t.relation].split("/")[1],
                   back[t.tail]) for t in kg2.rel_triples)
    att = Counter((back[t.entity], kg2.predicates.labels[t.predicate], t.value) for t in kg2.attr_triples)
    rel1 = Counter((t.head, kg1.relations.labels[t.relation].split("/")[1], t.tail) for t in kg1.rel_triples)
    att1 = Counter((t.entity, kg1.predicates.labels[t.predicate], t.value) for t in kg1.attr_triples)
    return rel1, rel, att1, att


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60))
def test_zero_noise_is_isomorphic(seed, n):
    pair = generate_aligned_pair(SynthConfig(n_entities=n, n_relations=4, rel_density=2, rng_seed=seed))
    rel1, rel2, att1, att2 = _relabelled(pair)
    assert rel1 == rel2 and att1 == att2
    assert pair.kg1.entities.labels != pair.kg2.entities.labels or n == 1


def test_full_attribute_noise_shares_no_values():
    pair = generate_aligned_pair(SynthConfig(attr_noise=1.0, rng_seed=3))
    v1 = {t.value for t in pair.kg1.attr_triples}
    v2 = {t.value for t in pair.kg2.attr_triples}
    assert not v1 & v2


@pytest.mark.parametrize("noise", [0.0, 0.1, 0.3, 0.6, 1.0])
def test_perturbed_counts_are_exact(noise):
    pair = generate_aligned_pair(SynthConfig(attr_noise=noise, rel_noise=noise, rng_seed=1))
    rel1, rel2, att1, att2 = _relabelled(pair)
    assert pair.n_attr_perturbed == round(noise * len(pair.kg1.attr_triples))
    assert pair.n_rel_perturbed == round(noise * len(pair.kg1.rel_triples))
    assert sum((att1 - att2).values()) == pair.n_attr_perturbed
    assert sum((rel1 - rel2).values()) == pair.n_rel_perturbed


def test_same_seed_same_pair():
    a, b = generate_aligned_pair(SynthConfig(rng_seed=9)), generate_aligned_pair(SynthConfig(rng_seed=9))
    assert a.kg2.rel_triples == b.kg2.rel_triples and a.kg2.attr_triples == b.kg2.attr_triples
    assert a.gold == b.gold


def test_both_value_pools_exercised():
    pair = generate_aligned_pair(SynthConfig(rng_seed=0))
    parts = partition_channels(pair.kg1, ["name"])
    n = {k: len(parts[k].attr_triples) for k in ChannelKind}
    assert n[ChannelKind.NAME] == 200 and n[ChannelKind.DIGITAL] > 0 and n[ChannelKind.LITERAL] > 0
    assert 0.2 < n[ChannelKind.DIGITAL] / (n[ChannelKind.DIGITAL] + n[ChannelKind.LITERAL]) < 0.4


def test_seed_splits():
    gold = generate_aligned_pair(SynthConfig(n_entities=100)).gold
    s = split_seeds(gold, (0.3, 0.1, 0.6), 0)
    assert (len(s.train), len(s.valid), len(s.test)) == (30, 10, 60)
    assert len(split_seeds(gold, (1.0, 0.0, 0.0), 0).train) == 100


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(attr_noise=1.5)
    with pytest.raises(ValueError):
        SynthConfig(n_entities=0)


def test_dump_round_trip(tmp_path):
    pair = generate_aligned_pair(SynthConfig(n_entities=30, rng_seed=2))
    files = dump_pair(pair, tmp_path)
    g = load_relation_triples(files["rel_triples_1"])
    load_attribute_triples(files["attr_triples_1"], g)
    assert len(g.rel_triples) == len(pair.kg1.rel_triples) and len(g.attr_triples) == len(pair.kg1.attr_triples)
    assert len((tmp_path / "ent_links").read_text().splitlines()) == 30
