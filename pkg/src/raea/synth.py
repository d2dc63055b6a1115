"""Aligned knowledge-graph pairs with controllable attribute and relation noise."""

import os
from dataclasses import dataclass

import numpy as np

from .kg import (KnowledgeGraph, SeedAlignment, TEST, split_pairs, write_attribute_triples,
                 write_relation_triples)

_CONSONANTS = "bdfgklmnprst"
_VOWELS = "aeiou"
# fresh values use letters and units the clean pools never produce
_FRESH_CONSONANTS = "cjqvwxz"
_FRESH_VOWELS = "y"
_UNITS = ("ounces", "pounds", "inches", "cm", "kg", "grams", "mm", "liters")
_FRESH_UNITS = ("cubits", "furlongs", "fathoms", "leagues", "spans", "parsecs")

NAME_PREDICATE = "name"
FILES = ("rel_triples_1", "attr_triples_1", "rel_triples_2", "attr_triples_2", "ent_links")


@dataclass
class SynthConfig:
    n_entities: int = 200
    n_relations: int = 20
    n_predicates: int = 10
    rel_density: float = 5.0
    attr_per_entity: int = 3
    attr_noise: float = 0.0
    rel_noise: float = 0.0
    numeric_frac: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("attr_noise", "rel_noise", "numeric_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if min(self.n_entities, self.n_relations, self.n_predicates) < 1 or self.attr_per_entity < 0:
            raise ValueError("entity, relation and predicate counts must be positive")
        if self.rel_density < 0:
            raise ValueError("rel_density must be non-negative")
        max_triples = self.n_entities * self.n_entities * self.n_relations
        if round(self.n_entities * self.rel_density) > max_triples:
            raise ValueError("rel_density too high for the number of distinct triples")


@dataclass
class GeneratedPair:
    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    gold: SeedAlignment
    n_attr_perturbed: int = 0
    n_rel_perturbed: int = 0


def _word(rng, consonants=_CONSONANTS, vowels=_VOWELS, syllables=(2, 4)):
    n = int(rng.integers(syllables[0], syllables[1] + 1))
    return "".join(consonants[rng.integers(len(consonants))] + vowels[rng.integers(len(vowels))]
                   for _ in range(n))


def _phrase(rng, fresh=False):
    cons, vow = (_FRESH_CONSONANTS, _FRESH_VOWELS) if fresh else (_CONSONANTS, _VOWELS)
    return " ".join(_word(rng, cons, vow) for _ in range(int(rng.integers(1, 4))))


def _numeric(rng, fresh=False):
    if fresh:
        return f"{rng.uniform(0.1, 999):.2f} {_FRESH_UNITS[rng.integers(len(_FRESH_UNITS))]}"
    return f"{rng.uniform(0.1, 999):.1f} {_UNITS[rng.integers(len(_UNITS))]}"


def generate_aligned_pair(cfg):
    rng = np.random.default_rng(cfg.rng_seed)
    n = cfg.n_entities
    src_label = [f"kg1/e{i}" for i in range(n)]
    perm = rng.permutation(n)  # kg1 entity i is kg2 entity label e{perm[i]}
    tgt_label = [f"kg2/e{perm[i]}" for i in range(n)]

    names, seen = [], set()
    while len(names) < n:
        w = _word(rng, syllables=(3, 5))
        if w not in seen:
            seen.add(w)
            names.append(w)
    attrs = []  # (entity, predicate, value, is_numeric)
    for i in range(n):
        attrs.append((i, NAME_PREDICATE, names[i], False))
        k = min(cfg.attr_per_entity, cfg.n_predicates)
        preds = rng.choice(cfg.n_predicates, size=k, replace=False)
        for p in sorted(preds):
            numeric = rng.random() < cfg.numeric_frac
            attrs.append((i, f"p{p}", _numeric(rng) if numeric else _phrase(rng), numeric))

    n_triples = int(round(n * cfg.rel_density))
    triples, seen_t = [], set()
    while len(triples) < n_triples:
        h, t = (int(x) for x in rng.integers(0, n, size=2))
        r = int(rng.integers(cfg.n_relations))
        if (h, r, t) not in seen_t:
            seen_t.add((h, r, t))
            triples.append((h, r, t))

    kg1 = KnowledgeGraph()
    for i in range(n):
        kg1.entities.intern(src_label[i])
    for h, r, t in triples:
        kg1.add_relation(src_label[h], f"kg1/r{r}", src_label[t])
    for e, p, v, _ in attrs:
        kg1.add_attribute(src_label[e], p, v)

    n_attr_noise = int(round(cfg.attr_noise * len(attrs)))
    noisy = set(rng.choice(len(attrs), size=n_attr_noise, replace=False).tolist())
    attrs2 = []
    for idx, (e, p, v, numeric) in enumerate(attrs):
        if idx in noisy:
            v = _numeric(rng, fresh=True) if numeric else _phrase(rng, fresh=True)
        attrs2.append((e, p, v))

    n_rel_noise = int(round(cfg.rel_noise * len(triples)))
    triples2 = list(triples)
    current = set(triples)
    for idx in rng.choice(len(triples), size=n_rel_noise, replace=False):
        h, r, t = triples2[idx]
        # never land on an original triple, or the perturbation would cancel out
        free = [x for x in range(n) if (h, r, x) not in seen_t and (h, r, x) not in current]
        if not free:
            raise ValueError(f"no free tail to rewire ({h}, r{r}, {t}); lower rel_density or rel_noise")
        t_new = int(free[rng.integers(len(free))])
        current.discard((h, r, t))
        current.add((h, r, t_new))
        triples2[idx] = (h, r, t_new)

    kg2 = KnowledgeGraph()
    inv = np.argsort(perm)
    for j in range(n):
        kg2.entities.intern(tgt_label[inv[j]])
    for idx in rng.permutation(len(triples2)):
        h, r, t = triples2[idx]
        kg2.add_relation(tgt_label[h], f"kg2/r{r}", tgt_label[t])
    for idx in rng.permutation(len(attrs2)):
        e, p, v = attrs2[idx]
        kg2.add_attribute(tgt_label[e], p, v)

    pairs = [(kg1.entities.id(src_label[i]), kg2.entities.id(tgt_label[i])) for i in range(n)]
    gold = SeedAlignment(pairs, [TEST] * n)
    return GeneratedPair(kg1, kg2, gold, n_attr_noise, n_rel_noise)


def split_seeds(gold, fracs, rng_seed):
    """``fracs`` = (train, valid[, test]); test receives whatever is left."""
    train, val = fracs[0], fracs[1] if len(fracs) > 1 else 0.0
    return split_pairs(gold.pairs, train, val, rng_seed)


def dump_pair(pair, directory):
    """Write the pair in the triple-file formats (file names follow DBP15K)."""
    os.makedirs(directory, exist_ok=True)
    write_relation_triples(pair.kg1, os.path.join(directory, "rel_triples_1"))
    write_attribute_triples(pair.kg1, os.path.join(directory, "attr_triples_1"))
    write_relation_triples(pair.kg2, os.path.join(directory, "rel_triples_2"))
    write_attribute_triples(pair.kg2, os.path.join(directory, "attr_triples_2"))
    e1, e2 = pair.kg1.entities.labels, pair.kg2.entities.labels
    with open(os.path.join(directory, "ent_links"), "w", encoding="utf-8") as fh:
        for a, b in pair.gold.pairs:
            fh.write(f"{e1[a]}\t{e2[b]}\n")
    return {name: os.path.join(directory, name) for name in FILES}
