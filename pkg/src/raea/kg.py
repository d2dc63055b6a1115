"""Knowledge graphs: triple loading, interning, incidence indexes, channel partition."""

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """A triple or seed file line could not be parsed."""

    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class SeedError(ValueError):
    pass


class Vocab:
    """Dense label <-> id table, ids assigned in first-seen order."""

    def __init__(self, labels=()):
        self._ids = {}
        self.labels = []
        for label in labels:
            self.intern(label)

    def intern(self, label):
        idx = self._ids.get(label)
        if idx is None:
            idx = len(self.labels)
            self._ids[label] = idx
            self.labels.append(label)
        return idx

    def id(self, label):
        return self._ids[label]

    def get(self, label, default=None):
        return self._ids.get(label, default)

    def __contains__(self, label):
        return label in self._ids

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.labels == other.labels


@dataclass(frozen=True)
class RelationTriple:
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class AttributeTriple:
    entity: int
    predicate: int
    value: str


@dataclass
class IncidenceIndex:
    """Set-valued lookups over relation triples plus flat arrays for the kernels.

    ``neighbors`` is undirected: both endpoints of every triple see each other.
    """

    heads_of_relation: dict
    tails_of_head_relation: dict
    tails_of_head: dict
    relations_between: dict
    neighbors: dict
    # flat views, one entry per triple, in triple order
    heads: np.ndarray
    relations: np.ndarray
    tails: np.ndarray
    # (center, neighbor) pairs sorted by center then neighbor
    nbr_center: np.ndarray
    nbr_other: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, IncidenceIndex):
            return NotImplemented
        dicts = ("heads_of_relation", "tails_of_head_relation", "tails_of_head",
                 "relations_between", "neighbors")
        arrays = ("heads", "relations", "tails", "nbr_center", "nbr_other")
        return (all(getattr(self, d) == getattr(other, d) for d in dicts)
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays))


def build_incidence(graph):
    heads_of_relation = {}
    tails_of_head_relation = {}
    tails_of_head = {}
    relations_between = {}
    neighbors = {}
    for t in graph.rel_triples:
        heads_of_relation.setdefault(t.relation, set()).add(t.head)
        tails_of_head_relation.setdefault((t.head, t.relation), set()).add(t.tail)
        tails_of_head.setdefault(t.head, set()).add(t.tail)
        relations_between.setdefault((t.head, t.tail), set()).add(t.relation)
        neighbors.setdefault(t.head, set()).add(t.tail)
        neighbors.setdefault(t.tail, set()).add(t.head)

    n = len(graph.rel_triples)
    heads = np.fromiter((t.head for t in graph.rel_triples), dtype=np.int64, count=n)
    relations = np.fromiter((t.relation for t in graph.rel_triples), dtype=np.int64, count=n)
    tails = np.fromiter((t.tail for t in graph.rel_triples), dtype=np.int64, count=n)
    pairs = sorted((i, j) for i, js in neighbors.items() for j in js)
    nbr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return IncidenceIndex(heads_of_relation, tails_of_head_relation, tails_of_head,
                          relations_between, neighbors, heads, relations, tails,
                          nbr[:, 0].copy(), nbr[:, 1].copy())


@dataclass
class KnowledgeGraph:
    entities: Vocab = field(default_factory=Vocab)
    relations: Vocab = field(default_factory=Vocab)
    predicates: Vocab = field(default_factory=Vocab)
    rel_triples: list = field(default_factory=list)
    attr_triples: list = field(default_factory=list)
    dropped_values: int = 0
    _seen: set = field(default_factory=set, repr=False)
    _incidence: IncidenceIndex = field(default=None, repr=False)

    @property
    def n_entities(self):
        return len(self.entities)

    @property
    def n_relations(self):
        return len(self.relations)

    def add_relation(self, head, relation, tail):
        """Intern labels and add a relation triple; returns False for a duplicate."""
        t = RelationTriple(self.entities.intern(head), self.relations.intern(relation),
                           self.entities.intern(tail))
        if t in self._seen:
            return False
        self._seen.add(t)
        self.rel_triples.append(t)
        self._incidence = None
        return True

    def add_attribute(self, entity, predicate, value):
        """Add an attribute triple; blank values are dropped and counted."""
        e = self.entities.intern(entity)
        if not value.strip():
            self.dropped_values += 1
            return False
        self.attr_triples.append(AttributeTriple(e, self.predicates.intern(predicate), value))
        return True

    @property
    def incidence(self):
        if self._incidence is None:
            self._incidence = build_incidence(self)
        return self._incidence


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if line.strip():
                yield lineno, line


def load_relation_triples(path, graph=None):
    graph = KnowledgeGraph() if graph is None else graph
    added = dupes = 0
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        if graph.add_relation(*(p.strip() for p in parts)):
            added += 1
        else:
            dupes += 1
    if added == 0 and dupes == 0:
        logger.warning("%s: no relation triples", path)
    logger.info("%s: %d relation triples (%d duplicates dropped)", path, added, dupes)
    return graph


def load_attribute_triples(path, graph=None):
    graph = KnowledgeGraph() if graph is None else graph
    before = graph.dropped_values
    added = 0
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) < 3:
            raise ParseError(path, lineno, f"expected entity, predicate, value; got {len(parts)} field(s)")
        if len(parts) > 3:
            raise ParseError(path, lineno, "attribute value contains a tab")
        entity, predicate, value = parts
        if graph.add_attribute(entity.strip(), predicate.strip(), value):
            added += 1
    logger.info("%s: %d attribute triples (%d blank values dropped)",
                path, added, graph.dropped_values - before)
    return graph


TRAIN, VALID, TEST = "train", "valid", "test"


@dataclass
class SeedAlignment:
    """Aligned (source, target) pairs with a split label per pair."""

    pairs: list
    split: list

    def __post_init__(self):
        if len(self.pairs) != len(self.split):
            raise SeedError("pairs and split labels differ in length")
        bad = set(self.split) - {TRAIN, VALID, TEST}
        if bad:
            raise SeedError(f"unknown split labels: {sorted(bad)}")
        for side in (0, 1):
            seen = set()
            for p in self.pairs:
                if p[side] in seen:
                    raise SeedError(f"entity {p[side]!r} appears twice on side {side}")
                seen.add(p[side])

    def subset(self, label):
        return [p for p, s in zip(self.pairs, self.split) if s == label]

    @property
    def train(self):
        return self.subset(TRAIN)

    @property
    def valid(self):
        return self.subset(VALID)

    @property
    def test(self):
        return self.subset(TEST)


def split_pairs(pairs, train_frac, val_frac, rng_seed):
    """Deterministic random split; counts are floor(frac * n), test takes the rest."""
    if not 0 < train_frac or val_frac < 0 or train_frac + val_frac > 1 + 1e-12:
        raise SeedError(f"invalid split fractions train={train_frac} val={val_frac}")
    n = len(pairs)
    n_train = int(np.floor(train_frac * n + 1e-9))
    n_val = int(np.floor(val_frac * n + 1e-9))
    order = np.random.default_rng(rng_seed).permutation(n)
    split = [TEST] * n
    for i in order[:n_train]:
        split[i] = TRAIN
    for i in order[n_train:n_train + n_val]:
        split[i] = VALID
    return SeedAlignment(list(pairs), split)


def read_seed_pairs(path):
    pairs = []
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, lineno, f"expected 2 tab-separated labels, got {len(parts)}")
        pairs.append((parts[0].strip(), parts[1].strip()))
    return pairs


def load_seed_alignment(path, train_frac, val_frac, rng_seed):
    """Read label pairs and split them; pairs stay as labels (resolve with ``resolve_seeds``)."""
    return split_pairs(read_seed_pairs(path), train_frac, val_frac, rng_seed)


def resolve_seeds(seeds, src, tgt):
    """Map label pairs to entity ids; pairs with an unknown label are dropped with a warning."""
    pairs, split = [], []
    missing = 0
    for (a, b), s in zip(seeds.pairs, seeds.split):
        i, j = src.entities.get(a), tgt.entities.get(b)
        if i is None or j is None:
            missing += 1
            continue
        pairs.append((i, j))
        split.append(s)
    if missing:
        logger.warning("%d seed pairs reference unknown entities and were dropped", missing)
    return SeedAlignment(pairs, split)


class ChannelKind(str, Enum):
    LITERAL = "literal"
    DIGITAL = "digital"
    NAME = "name"
    STRUCTURE = "structure"


ATTRIBUTE_CHANNELS = (ChannelKind.LITERAL, ChannelKind.DIGITAL, ChannelKind.NAME)


@dataclass
class DigitalRule:
    """Numeric-value classifier: optional sign, a decimal number, an optional short unit."""

    currency_symbols: str = "$€£¥"
    max_unit_len: int = 12

    def __post_init__(self):
        self._re = re.compile(
            r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:\s*[A-Za-z]{1,%d})?" % self.max_unit_len)

    def is_digital(self, value):
        v = value.strip()
        if v[:1] in self.currency_symbols:
            v = v[1:].lstrip()
        elif len(v) > 1 and v[0] in "+-" and v[1:2] in self.currency_symbols:
            v = v[0] + v[2:].lstrip()
        return bool(v) and self._re.fullmatch(v) is not None


@dataclass
class ChannelGraph:
    kind: ChannelKind
    graph: KnowledgeGraph
    attr_triples: list

    @property
    def rel_triples(self):
        return self.graph.rel_triples

    @property
    def incidence(self):
        return self.graph.incidence

    @property
    def n_entities(self):
        return self.graph.n_entities


def partition_channels(graph, name_predicates=(), digital_rule=None):
    """Split attribute triples into Name / Digital / Literal; Structure gets none.

    ``name_predicates`` holds predicate ids or labels.
    """
    rule = digital_rule or DigitalRule()
    names = set()
    for p in name_predicates:
        if isinstance(p, str):
            pid = graph.predicates.get(p)
            if pid is not None:
                names.add(pid)
        else:
            names.add(int(p))
    buckets = {k: [] for k in ChannelKind}
    for t in graph.attr_triples:
        if t.predicate in names:
            buckets[ChannelKind.NAME].append(t)
        elif rule.is_digital(t.value):
            buckets[ChannelKind.DIGITAL].append(t)
        else:
            buckets[ChannelKind.LITERAL].append(t)
    return {k: ChannelGraph(k, graph, buckets[k]) for k in ChannelKind}


def write_relation_triples(graph, path):
    ent, rel = graph.entities.labels, graph.relations.labels
    with open(path, "w", encoding="utf-8") as fh:
        for t in graph.rel_triples:
            fh.write(f"{ent[t.head]}\t{rel[t.relation]}\t{ent[t.tail]}\n")


def write_attribute_triples(graph, path):
    ent, pred = graph.entities.labels, graph.predicates.labels
    with open(path, "w", encoding="utf-8") as fh:
        for t in graph.attr_triples:
            fh.write(f"{ent[t.entity]}\t{pred[t.predicate]}\t{t.value}\n")
