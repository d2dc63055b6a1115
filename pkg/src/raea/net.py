"""RAEA channel network: attribute-aware entity encoder followed by the
relation-aware graph attention stack (entity -> relation -> entity -> enhance).

Row-vector convention throughout: an entity embedding is a row, a weight
matrix maps ``x @ W``.  Attention vectors scoring a concatenation ``[p || q]``
are stored whole and split, so ``a . [p || q] = a[:dp] . p + a[dp:] . q``.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffcore as dc
from .kg import ATTRIBUTE_CHANNELS, ChannelKind

CHECKPOINT_FORMAT = "raea-channel-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class DimensionsConfig:
    d_entity: int = 64
    d_attr: int = 128
    d_value: int = 128
    d_hidden: tuple = None
    d_relation: int = None
    attr_layers: int = 2
    relation_combine: str = "sum"
    use_rgat: bool = True
    leaky_slope: float = 0.2
    attr_fallback: str = "zero"

    def __post_init__(self):
        if self.d_relation is None:
            self.d_relation = self.d_entity
        if self.d_hidden is None:
            self.d_hidden = (self.d_entity,) * self.attr_layers
        self.d_hidden = tuple(int(d) for d in self.d_hidden)
        if len(self.d_hidden) != self.attr_layers:
            raise ValueError(f"d_hidden has {len(self.d_hidden)} entries for {self.attr_layers} layers")
        if self.d_hidden and self.d_hidden[-1] != self.d_entity:
            raise ValueError("final attribute layer width must equal d_entity")
        sizes = (self.d_entity, self.d_attr, self.d_value, self.d_relation, self.attr_layers) + self.d_hidden
        if min(sizes) < 1:
            raise ValueError(f"dimensions must be positive: {self}")
        if self.relation_combine not in ("sum", "concat"):
            raise ValueError(f"relation_combine must be 'sum' or 'concat', got {self.relation_combine!r}")
        if self.attr_fallback not in ("zero", "init"):
            raise ValueError(f"attr_fallback must be 'zero' or 'init', got {self.attr_fallback!r}")

    @property
    def d_rel_out(self):
        return self.d_relation * (2 if self.relation_combine == "concat" else 1)

    @property
    def d_rel_entity(self):
        return self.d_entity + 2 * self.d_rel_out

    @property
    def d_output(self):
        return 2 * self.d_rel_entity if self.use_rgat else self.d_entity


@dataclass
class ChannelInput:
    """Everything one graph contributes to a channel forward pass."""

    kind: ChannelKind
    n_entities: int
    n_relations: int
    heads: np.ndarray
    relations: np.ndarray
    tails: np.ndarray
    nbr_center: np.ndarray
    nbr_other: np.ndarray
    feats: object = None  # text_embed.AttributeFeatures
    h0: np.ndarray = None


def prepare_input(channel, feats=None, h0=None):
    inc = channel.incidence
    return ChannelInput(channel.kind, channel.n_entities, channel.graph.n_relations,
                        inc.heads, inc.relations, inc.tails, inc.nbr_center, inc.nbr_other,
                        feats, h0)


@dataclass
class AttrEncoderParams:
    W: list
    u: list


@dataclass
class RelGatParams:
    W_head: dc.Parameter
    W_tail: dc.Parameter
    a_rel_head: dc.Parameter
    a_rel_tail: dc.Parameter
    a_ent_out: dc.Parameter
    a_ent_in: dc.Parameter
    a_enh: dc.Parameter


def _glorot(rng, shape):
    fan = shape[0] + (shape[1] if len(shape) > 1 else 1)
    lim = np.sqrt(6.0 / fan)
    return rng.uniform(-lim, lim, size=shape)


class ChannelModel:
    """Learnable parameters of one channel, shared by the source and target graphs.

    Attribute channels take fixed initial entity vectors of width ``d_init``;
    the Structure channel owns trainable initial vectors per graph instead.
    """

    def __init__(self, kind, dims, d_init=None, n_entities=(0, 0), seed=0):
        self.kind = ChannelKind(kind)
        self.dims = dims
        self.n_entities = tuple(int(n) for n in n_entities)
        rng = np.random.default_rng(seed)
        self.params = {}
        self.attr = None
        self.rel = None
        if self.kind is ChannelKind.STRUCTURE:
            self.d_init = dims.d_entity
            lim = 1.0 / np.sqrt(dims.d_entity)
            for side, n in zip(("src", "tgt"), self.n_entities):
                self._add(f"h0_{side}", rng.uniform(-lim, lim, size=(n, dims.d_entity)))
        else:
            self.d_init = int(d_init if d_init is not None else dims.d_attr)
            Ws, us = [], []
            d_prev = self.d_init
            for i, d_h in enumerate(dims.d_hidden, 1):
                Ws.append(self._add(f"attr.W{i}", _glorot(rng, (dims.d_attr + dims.d_value, d_h))))
                us.append(self._add(f"attr.u{i}", _glorot(rng, (d_prev + dims.d_attr,))))
                d_prev = d_h
            self.attr = AttrEncoderParams(Ws, us)
        if dims.use_rgat:
            de, dr = dims.d_entity, dims.d_relation
            dro = dims.d_rel_out
            self.rel = RelGatParams(
                W_head=self._add("rel.W_head", _glorot(rng, (de, dr))),
                W_tail=self._add("rel.W_tail", _glorot(rng, (de, dr))),
                a_rel_head=self._add("rel.a_rel_head", _glorot(rng, (2 * dr,))),
                a_rel_tail=self._add("rel.a_rel_tail", _glorot(rng, (2 * dr,))),
                a_ent_out=self._add("rel.a_ent_out", _glorot(rng, (de + dro,))),
                a_ent_in=self._add("rel.a_ent_in", _glorot(rng, (de + dro,))),
                a_enh=self._add("rel.a_enh", _glorot(rng, (2 * dims.d_rel_entity,))),
            )

    def _add(self, name, value):
        p = dc.Parameter(value, name=name)
        self.params[name] = p
        return p

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state(self):
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_state(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise ValueError(f"parameter names differ: {sorted(missing)}")
        for k, v in state.items():
            p = self.params[k]
            if p.value.shape != np.shape(v):
                raise ValueError(f"{k}: shape {np.shape(v)} != {p.value.shape}")
            p.value[...] = v

    def forward(self, inp, side="src"):
        return channel_forward(self, inp, side)


def _score_pair(a, left, left_idx, right, right_idx):
    """a . [left[left_idx] || right[right_idx]] without materialising the concatenation."""
    dl = left.shape[1]
    a_l = dc.take(a, 0, dl)
    a_r = dc.take(a, dl, a.shape[0])
    return dc.add(dc.gather(dc.linear(left, a_l), left_idx),
                  dc.gather(dc.linear(right, a_r), right_idx))


def attr_entity_encode(feats, n_entities, h0, params, dims, trace=None):
    """Attention over each entity's attribute triples, one pass per layer."""
    h = dc.as_tensor(h0)
    if h.shape[0] != n_entities:
        raise dc.ContractError(f"initial vectors have {h.shape[0]} rows for {n_entities} entities")
    pair = np.hstack([feats.attr, feats.value]) if len(feats) else np.zeros((0, dims.d_attr + dims.d_value))
    if pair.shape[1] != dims.d_attr + dims.d_value:
        raise dc.ContractError(
            f"attribute features have width {pair.shape[1]}, expected {dims.d_attr + dims.d_value}")
    ent = feats.entity
    attr_vecs = feats.attr if len(feats) else np.zeros((0, dims.d_attr))
    for layer, (W, u) in enumerate(zip(params.W, params.u), 1):
        if u.shape[0] != h.shape[1] + dims.d_attr:
            raise dc.ContractError(f"layer {layer}: u has length {u.shape[0]}, "
                                   f"expected {h.shape[1]} + {dims.d_attr}")
        scores = _score_pair(u, h, ent, dc.as_tensor(attr_vecs), np.arange(ent.size))
        alpha = dc.segment_softmax(dc.leaky_relu(scores, dims.leaky_slope), ent, n_entities)
        if trace is not None:
            trace[f"attr{layer}"] = (alpha.value, ent)
        h = dc.elu(dc.weighted_segment_sum(alpha, dc.linear(pair, W), ent, n_entities))
    if dims.attr_fallback == "init":
        bare = np.ones(n_entities, dtype=bool)
        bare[ent] = False
        if bare.any():
            h0v = dc.as_tensor(h0).value
            if h0v.shape[1] != h.shape[1]:
                raise dc.ContractError("attr_fallback='init' needs initial width == d_entity")
            h = dc.add(h, np.where(bare[:, None], h0v, 0.0))
    return h


def relation_from_entities(x, inp, params, dims, trace=None):
    """Head- and tail-view relation embeddings, combined by sum (or concatenation)."""
    heads, tails, rels = inp.heads, inp.tails, inp.relations
    n_rel = inp.n_relations
    slope = dims.leaky_slope
    P = dc.linear(x, params.W_head)
    Q = dc.linear(x, params.W_tail)
    s_h = _score_pair(params.a_rel_head, P, heads, Q, tails)
    alpha_h = dc.segment_softmax(dc.leaky_relu(s_h, slope), rels, n_rel)
    r_h = dc.relu(dc.weighted_segment_sum(alpha_h, dc.gather(P, heads), rels, n_rel))
    s_t = _score_pair(params.a_rel_tail, Q, tails, P, heads)
    alpha_t = dc.segment_softmax(dc.leaky_relu(s_t, slope), rels, n_rel)
    r_t = dc.relu(dc.weighted_segment_sum(alpha_t, dc.gather(Q, tails), rels, n_rel))
    if trace is not None:
        trace["rel_head"] = (alpha_h.value, rels)
        trace["rel_tail"] = (alpha_t.value, rels)
    if dims.relation_combine == "concat":
        return dc.concat([r_h, r_t], axis=1)
    return dc.add(r_h, r_t)


def entity_from_relations(x, r, inp, params, dims, trace=None):
    """Out-relation and in-relation aggregates, concatenated after ``x``."""
    n = inp.n_entities
    heads, tails, rels = inp.heads, inp.tails, inp.relations
    slope = dims.leaky_slope
    r_of_triple = dc.gather(r, rels)
    s_o = _score_pair(params.a_ent_out, x, heads, r, rels)
    alpha_o = dc.segment_softmax(dc.leaky_relu(s_o, slope), heads, n)
    x_h = dc.relu(dc.weighted_segment_sum(alpha_o, r_of_triple, heads, n))
    s_i = _score_pair(params.a_ent_in, x, tails, r, rels)
    alpha_i = dc.segment_softmax(dc.leaky_relu(s_i, slope), tails, n)
    x_t = dc.relu(dc.weighted_segment_sum(alpha_i, r_of_triple, tails, n))
    if trace is not None:
        trace["ent_out"] = (alpha_o.value, heads)
        trace["ent_in"] = (alpha_i.value, tails)
    return dc.concat([x, x_h, x_t], axis=1)


def entity_enhance(x_rel, inp, params, dims, trace=None):
    """One plain graph-attention layer over undirected neighbours, concatenated after ``x_rel``."""
    n = inp.n_entities
    c, o = inp.nbr_center, inp.nbr_other
    s = _score_pair(params.a_enh, x_rel, c, x_rel, o)
    alpha = dc.segment_softmax(dc.leaky_relu(s, dims.leaky_slope), c, n)
    if trace is not None:
        trace["enhance"] = (alpha.value, c)
    agg = dc.relu(dc.weighted_segment_sum(alpha, dc.gather(x_rel, o), c, n))
    return dc.concat([x_rel, agg], axis=1)


def channel_forward(model, inp, side="src", trace=None):
    """Full channel stack for one graph; rows are L2-normalized."""
    dims = model.dims
    if ChannelKind(inp.kind) is not model.kind:
        raise dc.ContractError(f"model is {model.kind.value}, input is {ChannelKind(inp.kind).value}")
    if model.kind is ChannelKind.STRUCTURE:
        x = model.params[f"h0_{side}"]
        if x.shape[0] != inp.n_entities:
            raise dc.ContractError(f"structure model has {x.shape[0]} {side} entities, "
                                   f"input has {inp.n_entities}")
    else:
        h0 = inp.h0 if inp.h0 is not None else np.zeros((inp.n_entities, model.d_init))
        x = attr_entity_encode(inp.feats, inp.n_entities, h0, model.attr, dims, trace)
    _expect(x, dims.d_entity, "x")
    if not dims.use_rgat:
        return dc.l2_normalize_rows(x)
    r = relation_from_entities(x, inp, model.rel, dims, trace)
    x_rel = entity_from_relations(x, r, inp, model.rel, dims, trace)
    _expect(x_rel, dims.d_rel_entity, "x_rel")
    x_out = entity_enhance(x_rel, inp, model.rel, dims, trace)
    _expect(x_out, 2 * dims.d_rel_entity, "x_out")
    return dc.l2_normalize_rows(x_out)


def _expect(t, width, what):
    if t.value.ndim != 2 or t.shape[1] != width:
        raise dc.ContractError(f"{what} has shape {t.shape}, expected width {width}")


def save_checkpoint(model, path):
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind.value,
        "dims": asdict(model.dims),
        "d_init": model.d_init,
        "n_entities": list(model.n_entities),
        "params": [{"name": k, "shape": list(p.shape)} for k, p in model.params.items()],
    }
    arrays = {f"p:{k}": p.value for k, p in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a channel checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        dims = DimensionsConfig(**meta["dims"])
        model = ChannelModel(meta["kind"], dims, d_init=meta["d_init"], n_entities=meta["n_entities"])
        model.load_state({p["name"]: z[f"p:{p['name']}"] for p in meta["params"]})
    return model


__all__ = [
    "ATTRIBUTE_CHANNELS", "AttrEncoderParams", "ChannelInput", "ChannelModel", "DimensionsConfig",
    "RelGatParams", "attr_entity_encode", "channel_forward", "entity_enhance", "entity_from_relations",
    "load_checkpoint", "prepare_input", "relation_from_entities", "save_checkpoint",
]
