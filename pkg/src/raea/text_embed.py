"""String embedders for attribute predicates, values and entity names.

Two sources are supported:

* a precomputed table (``string<TAB>v1 v2 ... vd`` per line), for vectors
  produced offline by any sentence encoder;
* a hashed character n-gram embedder, used as the default and as the fallback
  for table misses.

Hash function (stable across versions): each n-gram is UTF-8 encoded and
digested with ``blake2b(digest_size=8, key=<hash_seed as 8 little-endian bytes>)``.
The digest, read as a little-endian unsigned 64-bit integer ``h``, selects
bucket ``h % dim`` and sign ``+1`` if bit 63 of ``h`` is clear, else ``-1``.
"""

import hashlib
import logging
import re
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

_WS = re.compile(r"\s+")


class EmbeddingFormatError(ValueError):
    pass


def normalize(s):
    """Lowercase and collapse internal whitespace."""
    return _WS.sub(" ", s.strip().lower())


@dataclass(frozen=True)
class HashNGramConfig:
    dim: int = 128
    ngram_min: int = 2
    ngram_max: int = 4
    hash_seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.ngram_min < 1 or self.ngram_max < self.ngram_min:
            raise ValueError(f"invalid hashing config {self}")


BASIC_CONFIG = HashNGramConfig(ngram_min=1, ngram_max=1)


def ngrams(s, lo, hi):
    if 0 < len(s) < lo:
        return [s]
    return [s[i:i + n] for n in range(lo, hi + 1) for i in range(len(s) - n + 1)]


def embed_string(s, cfg=HashNGramConfig()):
    """Signed feature-hashing of character n-grams, L2-normalized (empty -> zeros)."""
    vec = np.zeros(cfg.dim)
    key = int(cfg.hash_seed).to_bytes(8, "little", signed=True)
    for gram in ngrams(normalize(s), cfg.ngram_min, cfg.ngram_max):
        h = int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest(),
                           "little")
        vec[h % cfg.dim] += -1.0 if h >> 63 else 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class EmbeddingTable:
    def __init__(self, dim, entries=None):
        self.dim = int(dim)
        self.entries = {}
        for k, v in (entries or {}).items():
            self[k] = v

    def __setitem__(self, key, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise EmbeddingFormatError(f"vector for {key!r} has shape {vec.shape}, want ({self.dim},)")
        self.entries[normalize(key)] = vec

    def get(self, key):
        return self.entries.get(normalize(key))

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return normalize(key) in self.entries


def load_precomputed(path):
    dim = None
    table = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            key, sep, rest = line.rpartition("\t")
            if not sep:
                raise EmbeddingFormatError(f"{path}:{lineno}: missing TAB between key and vector")
            try:
                vec = np.array([float(x) for x in rest.split()])
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from None
            if dim is None:
                dim = vec.size
                if dim == 0:
                    raise EmbeddingFormatError(f"{path}:{lineno}: empty vector")
                table = EmbeddingTable(dim)
            elif vec.size != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: vector has {vec.size} values, expected {dim}")
            if key in table:
                logger.warning("%s:%d: duplicate key %r, keeping the last entry", path, lineno, key)
            table[key] = vec
    if table is None:
        raise EmbeddingFormatError(f"{path}: no vectors")
    return table


class Embedder:
    """Table lookup with hashed fallback; results are memoised per normalized string."""

    def __init__(self, table=None, cfg=None):
        if cfg is None:
            cfg = HashNGramConfig(dim=table.dim) if table is not None else HashNGramConfig()
        if table is not None and table.dim != cfg.dim:
            raise ValueError(f"table dim {table.dim} != fallback dim {cfg.dim}")
        self.table = table
        self.cfg = cfg
        self._cache = {}

    @property
    def dim(self):
        return self.cfg.dim

    def __call__(self, s):
        key = normalize(s)
        vec = self._cache.get(key)
        if vec is None:
            vec = self.table.get(key) if self.table is not None else None
            if vec is None:
                vec = embed_string(key, self.cfg)
            self._cache[key] = vec
        return vec

    def many(self, strings):
        if not strings:
            return np.zeros((0, self.dim))
        return np.stack([self(s) for s in strings])


@dataclass
class AttributeFeatures:
    """Per-triple features of one channel: owning entity, predicate vector, value vector."""

    entity: np.ndarray
    attr: np.ndarray
    value: np.ndarray

    def __len__(self):
        return self.entity.size

    @property
    def pair(self):
        return np.hstack([self.attr, self.value])


def embed_attributes(channel, embedder):
    triples = channel.attr_triples
    labels = channel.graph.predicates.labels
    return AttributeFeatures(
        entity=np.array([t.entity for t in triples], dtype=np.int64),
        attr=embedder.many([labels[t.predicate] for t in triples]),
        value=embedder.many([t.value for t in triples]),
    )


def entity_name_vectors(graph, name_predicates, embedder):
    """Mean embedded name value per entity; zeros where an entity has no name triple."""
    names = {graph.predicates.get(p) if isinstance(p, str) else p for p in name_predicates}
    out = np.zeros((graph.n_entities, embedder.dim))
    counts = np.zeros(graph.n_entities)
    for t in graph.attr_triples:
        if t.predicate in names:
            out[t.entity] += embedder(t.value)
            counts[t.entity] += 1
    has = counts > 0
    out[has] /= counts[has, None]
    return out
