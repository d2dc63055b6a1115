"""End-to-end orchestration: KG bundle -> rough filter -> channel training ->
alignment (ensemble + Top-K) -> evaluation, plus the ablation sweep.

Configuration is a flat ``key = value`` text file; ``#`` starts a comment.
Relative paths resolve against the config file's directory.  See
``PipelineConfig`` for the accepted keys.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import align
from .kg import (ATTRIBUTE_CHANNELS, ChannelKind, KnowledgeGraph, SeedAlignment, load_attribute_triples,
                 load_relation_triples, partition_channels, read_seed_pairs, resolve_seeds, split_pairs,
                 write_attribute_triples, write_relation_triples)
from .net import ChannelModel, DimensionsConfig, channel_forward, load_checkpoint, prepare_input, save_checkpoint
from .text_embed import Embedder, HashNGramConfig, embed_attributes, entity_name_vectors, load_precomputed
from .trainer import TrainConfig, grid_search, monitor_split, train_channel

logger = logging.getLogger(__name__)

CHANNEL_ORDER = (ChannelKind.LITERAL, ChannelKind.DIGITAL, ChannelKind.NAME, ChannelKind.STRUCTURE)
BUNDLE_VERSION = 1


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


_PATH_KEYS = {"rel_triples_1", "attr_triples_1", "rel_triples_2", "attr_triples_2", "ent_links",
              "queries", "candidates", "rules", "candidate_sets", "embedding_file", "output_dir"}


@dataclass
class PipelineConfig:
    # inputs
    rel_triples_1: str = None
    attr_triples_1: str = None
    rel_triples_2: str = None
    attr_triples_2: str = None
    ent_links: str = None
    queries: str = None
    candidates: str = None
    rules: str = None
    candidate_sets: str = None
    output_dir: str = "raea_out"
    # seeds
    train_frac: float = 0.3
    val_frac: float = 0.0
    split_seed: int = 0
    # channels
    channels: tuple = ("literal", "digital", "name", "structure")
    name_predicates: tuple = ("name",)
    ensemble: str = "preweighted"
    # text embedding
    embedder: str = "hash"
    embedding_file: str = None
    embed_dim: int = 128
    ngram_min: int = 2
    ngram_max: int = 4
    hash_seed: int = 0
    # network
    d_entity: int = 64
    d_relation: int = 0
    attr_layers: int = 2
    relation_combine: str = "sum"
    # training
    margin: float = 3.0
    n_neg: int = 15
    resample_every: int = 50
    max_epochs: int = 1500
    patience: int = 50
    lr_grid: tuple = (0.007,)
    l2_grid: tuple = (0.0,)
    distance: str = "L1"
    seed: int = 0
    monitor_frac: float = 0.1
    # output / evaluation
    top_k: int = 10
    ndcg_k: int = 10
    bootstrap_resamples: int = 1000
    bootstrap_seed: int = 0
    # ablations
    no_attribute: bool = False
    no_relation: bool = False
    no_name: bool = False
    no_rgat: bool = False
    basic_embedder: bool = False

    def __post_init__(self):
        self.channels = tuple(ChannelKind(c).value for c in self.channels)
        if self.ensemble not in ("preweighted", "average", "classifier"):
            raise ConfigError(f"ensemble must be preweighted, average or classifier; got {self.ensemble!r}")
        if self.embedder not in ("hash", "precomputed"):
            raise ConfigError(f"embedder must be hash or precomputed; got {self.embedder!r}")
        if self.embedder == "precomputed" and not self.embedding_file:
            raise ConfigError("embedder = precomputed needs embedding_file")
        if not self.enabled_channels():
            raise ConfigError("no channel left enabled after ablation flags")

    def enabled_channels(self):
        drop = set()
        if self.no_attribute:
            drop |= {ChannelKind.LITERAL, ChannelKind.DIGITAL}
        if self.no_relation:
            drop.add(ChannelKind.STRUCTURE)
        if self.no_name:
            drop.add(ChannelKind.NAME)
        wanted = {ChannelKind(c) for c in self.channels}
        return [k for k in CHANNEL_ORDER if k in wanted and k not in drop]

    def train_config(self):
        return TrainConfig(margin=self.margin, n_neg=self.n_neg, resample_every=self.resample_every,
                           max_epochs=self.max_epochs, patience=self.patience, lr_grid=self.lr_grid,
                           l2_grid=self.l2_grid, distance=self.distance, rng_seed=self.seed,
                           monitor_frac=self.monitor_frac)

    def dims(self, embed_dim):
        return DimensionsConfig(d_entity=self.d_entity, d_attr=embed_dim, d_value=embed_dim,
                                d_relation=self.d_relation or None, attr_layers=self.attr_layers,
                                relation_combine=self.relation_combine, use_rgat=not self.no_rgat)

    def make_embedder(self):
        if self.basic_embedder:
            return Embedder(cfg=HashNGramConfig(self.embed_dim, 1, 1, self.hash_seed))
        if self.embedder == "precomputed":
            table = load_precomputed(self.embedding_file)
            return Embedder(table, HashNGramConfig(table.dim, self.ngram_min, self.ngram_max, self.hash_seed))
        return Embedder(cfg=HashNGramConfig(self.embed_dim, self.ngram_min, self.ngram_max, self.hash_seed))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _coerce(name, ftype, default, raw):
    raw = raw.strip()
    if isinstance(default, bool) or ftype in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple) or ftype in (tuple, "tuple"):
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if name in ("lr_grid", "l2_grid"):
            try:
                return tuple(float(x) for x in items)
            except ValueError:
                raise ConfigError(f"{name}: expected comma-separated numbers, got {raw!r}") from None
        return tuple(items)
    if isinstance(default, int) or ftype in (int, "int"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    if isinstance(default, float) or ftype in (float, "float"):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    return raw


def valid_keys():
    return [f.name for f in dataclasses.fields(PipelineConfig)]


def parse_config_text(text, base_dir="."):
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; valid keys: {', '.join(valid_keys())}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        value = _coerce(key, f.type, default, raw)
        if key in _PATH_KEYS and value and not os.path.isabs(value):
            value = os.path.normpath(os.path.join(base_dir, value))
        values[key] = value
    try:
        return PipelineConfig(**values)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path):
    if not os.path.exists(path):
        raise InputError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), os.path.dirname(os.path.abspath(path)))


def _require(path, key):
    if not path:
        raise ConfigError(f"missing required key {key!r}")
    if not os.path.exists(path):
        raise InputError(f"{key}: file not found: {path}")
    return path


# -- KG bundle ------------------------------------------------------------------

@dataclass
class Bundle:
    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    seeds: SeedAlignment  # entity ids


def build_bundle(cfg):
    kg1 = load_relation_triples(_require(cfg.rel_triples_1, "rel_triples_1"))
    if cfg.attr_triples_1:
        load_attribute_triples(_require(cfg.attr_triples_1, "attr_triples_1"), kg1)
    kg2 = load_relation_triples(_require(cfg.rel_triples_2, "rel_triples_2"))
    if cfg.attr_triples_2:
        load_attribute_triples(_require(cfg.attr_triples_2, "attr_triples_2"), kg2)
    labels = read_seed_pairs(_require(cfg.ent_links, "ent_links"))
    seeds = resolve_seeds(split_pairs(labels, cfg.train_frac, cfg.val_frac, cfg.split_seed), kg1, kg2)
    return Bundle(kg1, kg2, seeds)


def save_bundle(bundle, directory):
    os.makedirs(directory, exist_ok=True)
    for i, kg in ((1, bundle.kg1), (2, bundle.kg2)):
        write_relation_triples(kg, os.path.join(directory, f"rel_triples_{i}"))
        write_attribute_triples(kg, os.path.join(directory, f"attr_triples_{i}"))
        with open(os.path.join(directory, f"entities_{i}"), "w", encoding="utf-8") as fh:
            fh.writelines(f"{label}\n" for label in kg.entities.labels)
    e1, e2 = bundle.kg1.entities.labels, bundle.kg2.entities.labels
    with open(os.path.join(directory, "seeds.tsv"), "w", encoding="utf-8") as fh:
        for (a, b), s in zip(bundle.seeds.pairs, bundle.seeds.split):
            fh.write(f"{e1[a]}\t{e2[b]}\t{s}\n")
    manifest = {
        "version": BUNDLE_VERSION,
        "kg1": {"entities": bundle.kg1.n_entities, "relations": bundle.kg1.n_relations,
                "rel_triples": len(bundle.kg1.rel_triples), "attr_triples": len(bundle.kg1.attr_triples)},
        "kg2": {"entities": bundle.kg2.n_entities, "relations": bundle.kg2.n_relations,
                "rel_triples": len(bundle.kg2.rel_triples), "attr_triples": len(bundle.kg2.attr_triples)},
        "seeds": {s: bundle.seeds.split.count(s) for s in ("train", "valid", "test")},
    }
    with open(os.path.join(directory, "bundle.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(directory):
    manifest = os.path.join(directory, "bundle.json")
    if not os.path.exists(manifest):
        raise InputError(f"not a KG bundle (no bundle.json): {directory}")
    graphs = []
    for i in (1, 2):
        kg = KnowledgeGraph()
        with open(os.path.join(directory, f"entities_{i}"), encoding="utf-8") as fh:
            for line in fh:
                kg.entities.intern(line.rstrip("\n"))
        load_relation_triples(os.path.join(directory, f"rel_triples_{i}"), kg)
        load_attribute_triples(os.path.join(directory, f"attr_triples_{i}"), kg)
        graphs.append(kg)
    pairs, split = [], []
    with open(os.path.join(directory, "seeds.tsv"), encoding="utf-8") as fh:
        for line in fh:
            a, b, s = line.rstrip("\n").split("\t")
            pairs.append((graphs[0].entities.id(a), graphs[1].entities.id(b)))
            split.append(s)
    return Bundle(graphs[0], graphs[1], SeedAlignment(pairs, split))


# -- channel inputs -------------------------------------------------------------------

def channel_inputs(bundle, kind, cfg, embedder):
    """(source, target) ChannelInput for one channel kind."""
    out = []
    for kg in (bundle.kg1, bundle.kg2):
        part = partition_channels(kg, cfg.name_predicates)[kind]
        if kind in ATTRIBUTE_CHANNELS:
            feats = embed_attributes(part, embedder)
            if cfg.no_name:
                h0 = np.zeros((kg.n_entities, embedder.dim))
            else:
                h0 = entity_name_vectors(kg, cfg.name_predicates, embedder)
            out.append(prepare_input(part, feats, h0))
        else:
            out.append(prepare_input(part))
    return tuple(out)


def new_model(bundle, kind, cfg, embedder, seed_offset=0):
    return ChannelModel(kind, cfg.dims(embedder.dim), d_init=embedder.dim,
                        n_entities=(bundle.kg1.n_entities, bundle.kg2.n_entities),
                        seed=cfg.seed + 1000 * CHANNEL_ORDER.index(kind) + seed_offset)


# -- training -------------------------------------------------------------------------

def train_stage(bundle, cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    embedder = cfg.make_embedder()
    tcfg = cfg.train_config()
    summary = {"channels": {}}
    for kind in cfg.enabled_channels():
        inputs = channel_inputs(bundle, kind, cfg, embedder)
        train, valid = bundle.seeds.train, bundle.seeds.valid
        if len(tcfg.lr_grid) * len(tcfg.l2_grid) > 1:
            grid = grid_search(lambda: new_model(bundle, kind, cfg, embedder), inputs, train, valid, tcfg)
            result, table = grid.best, grid.table
        else:
            result = train_channel(new_model(bundle, kind, cfg, embedder), inputs, train, valid, tcfg)
            table = [(result.lr, result.l2, result.best_hits1, result.best_epoch)]
        logger.info("%s: best hits@1 %.4f at epoch %d (lr=%g, l2=%g)", kind.value,
                    result.best_hits1, result.best_epoch, result.lr, result.l2)
        save_checkpoint(result.model, os.path.join(out_dir, f"channel_{kind.value}.npz"))
        result.write_history(os.path.join(out_dir, f"history_{kind.value}.tsv"))
        summary["channels"][kind.value] = {
            "lr": result.lr, "l2": result.l2, "best_epoch": result.best_epoch,
            "best_hits1": result.best_hits1, "epochs_run": len(result.history),
            "output_dim": result.model.dims.d_output,
            "grid": [list(row) for row in table],
            "monitor_pairs": np.asarray(result.monitor_pairs).tolist(),
            "train_pairs": np.asarray(result.train_pairs).tolist(),
        }
    with open(os.path.join(out_dir, "training.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return summary


def _read_summary(train_dir):
    path = os.path.join(train_dir, "training.json")
    if not os.path.exists(path):
        raise InputError(f"no training summary in {train_dir}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def channel_embeddings(bundle, cfg, train_dir, embedder=None):
    """Forward every trained channel on both graphs (no tape)."""
    embedder = embedder or cfg.make_embedder()
    out = {}
    for kind in cfg.enabled_channels():
        path = os.path.join(train_dir, f"channel_{kind.value}.npz")
        if not os.path.exists(path):
            raise InputError(f"missing checkpoint {path}")
        model = load_checkpoint(path)
        src_in, tgt_in = channel_inputs(bundle, kind, cfg, embedder)
        out[kind] = (channel_forward(model, src_in, "src").value, channel_forward(model, tgt_in, "tgt").value)
    return out


# -- alignment -----------------------------------------------------------------------

def query_rows(bundle):
    test = bundle.seeds.test
    if test:
        return np.array([a for a, _ in test], dtype=np.int64)
    return np.arange(bundle.kg1.n_entities)


def read_candidate_sets(path, bundle):
    from .rough_filter import read_candidates

    out = {}
    for q, cands in read_candidates(path).items():
        qi = bundle.kg1.entities.get(q)
        if qi is None:
            continue
        out[qi] = {bundle.kg2.entities.get(c) for c in cands} - {None}
    return out


def align_stage(bundle, cfg, train_dir, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    summary = _read_summary(train_dir)
    embs = channel_embeddings(bundle, cfg, train_dir)
    rows = query_rows(bundle)
    cols = np.arange(bundle.kg2.n_entities)
    mats = [align.similarity_matrix(s, t, row_ids=rows, col_ids=cols, tag=k.value)
            for k, (s, t) in embs.items()]
    kinds = list(embs)
    meta = {"channels": [k.value for k in kinds], "ensemble": cfg.ensemble,
            "output_dims": {k.value: int(embs[k][0].shape[1]) for k in kinds}}
    if cfg.ensemble == "average":
        ens = align.ensemble_average(mats)
    elif cfg.ensemble == "preweighted":
        hits = []
        for k, (s, t) in embs.items():
            mon = np.asarray(summary["channels"][k.value]["monitor_pairs"], dtype=np.int64).reshape(-1, 2)
            full = align.similarity_matrix(s, t, row_ids=mon[:, 0], col_ids=cols)
            hits.append(align.hits_at_k(full, mon, 1))
        w = align.preweights(hits)
        ens = align.ensemble_weighted(mats, w)
        meta["channel_hits1"] = hits
        meta["weights"] = w.tolist()
    else:
        train = np.asarray(bundle.seeds.train, dtype=np.int64).reshape(-1, 2)
        trows = train[:, 0]
        tmats = [align.similarity_matrix(s, t, row_ids=trows, col_ids=cols)
                 for s, t in embs.values()]
        fitted = align.ensemble_classifier(tmats, train, rng_seed=cfg.seed)
        w, b = np.array(fitted.meta["classifier_w"]), fitted.meta["classifier_b"]
        ens = align.SimilarityMatrix(sum(wi * m.scores for wi, m in zip(w, mats)) + b, rows, cols)
        meta["classifier_w"] = w.tolist()
        meta["classifier_b"] = b
    candidates = read_candidate_sets(cfg.candidate_sets, bundle) if cfg.candidate_sets else None
    ranked = align.top_k(ens, cfg.top_k, candidates)
    align.write_top_k(os.path.join(out_dir, "topk.tsv"), ranked,
                      bundle.kg1.entities.labels, bundle.kg2.entities.labels)
    arrays = {"rows": rows, "cols": cols, "ensemble": ens.scores}
    arrays.update({f"channel:{m.tag}": m.scores for m in mats})
    with open(os.path.join(out_dir, "similarity.npz"), "wb") as fh:
        np.savez(fh, **arrays)
    with open(os.path.join(out_dir, "align.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return ens, meta


def load_similarity(align_dir, which="ensemble"):
    path = os.path.join(align_dir, "similarity.npz")
    if not os.path.exists(path):
        raise InputError(f"missing {path}")
    with np.load(path, allow_pickle=False) as z:
        return align.SimilarityMatrix(z[which], z["rows"], z["cols"], which)


def evaluate_stage(bundle, cfg, align_dir, out_path):
    sim = load_similarity(align_dir)
    gold = np.asarray(bundle.seeds.test, dtype=np.int64).reshape(-1, 2)
    report = align.metric_report(sim, gold, ks=(1, 10), ndcg_k=cfg.ndcg_k, pr_k=cfg.top_k,
                                 n_resamples=cfg.bootstrap_resamples, rng_seed=cfg.bootstrap_seed)
    report.write(out_path)
    return report


def rough_filter_stage(cfg, out_path):
    from .rough_filter import apply_rules, coverage_stats, load_rules, read_products, write_candidates

    queries = read_products(_require(cfg.queries, "queries"))
    cands = read_products(_require(cfg.candidates, "candidates"))
    rules = load_rules(_require(cfg.rules, "rules"))
    sets = apply_rules(rules, queries, cands)
    write_candidates(out_path, sets)
    stats = coverage_stats(sets, queries)
    logger.info("rough filter: %d queries, %d with no candidates, %d distinct candidates",
                len(queries), stats.n_empty, stats.n_distinct)
    return sets


def run_pipeline(cfg, out_dir=None):
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    bundle = build_bundle(cfg)
    save_bundle(bundle, os.path.join(out_dir, "bundle"))
    if cfg.queries and cfg.candidates and cfg.rules:
        cand_path = os.path.join(out_dir, "candidates.tsv")
        rough_filter_stage(cfg, cand_path)
    train_stage(bundle, cfg, os.path.join(out_dir, "train"))
    align_stage(bundle, cfg, os.path.join(out_dir, "train"), os.path.join(out_dir, "align"))
    return evaluate_stage(bundle, cfg, os.path.join(out_dir, "align"), os.path.join(out_dir, "metrics.txt"))


ABLATIONS = (
    ("RAEA", {}),
    ("w/o Attribute", {"no_attribute": True}),
    ("w/o Relation", {"no_relation": True}),
    ("w/o Name", {"no_name": True}),
    ("w/o RGAT", {"no_rgat": True}),
    ("w/o Encoder", {"basic_embedder": True}),
)


@dataclass
class AblationRow:
    variant: str
    channels: list
    output_dims: dict
    metrics: dict = field(default_factory=dict)


def run_ablation(cfg, out_dir=None):
    """Train/align/evaluate the full model and the five variants on one bundle."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    bundle = build_bundle(cfg)
    rows = []
    for i, (name, flags) in enumerate(ABLATIONS):
        vcfg = cfg.replace(**flags)
        vdir = os.path.join(out_dir, f"variant_{i}")
        train_stage(bundle, vcfg, os.path.join(vdir, "train"))
        _, meta = align_stage(bundle, vcfg, os.path.join(vdir, "train"), os.path.join(vdir, "align"))
        report = evaluate_stage(bundle, vcfg, os.path.join(vdir, "align"), os.path.join(vdir, "metrics.txt"))
        rows.append(AblationRow(name, meta["channels"], meta["output_dims"],
                                {k: report[k] for k in ("hits@1", "hits@10", "mrr")}))
    write_ablation_table(rows, os.path.join(out_dir, "ablation.tsv"))
    return rows


def write_ablation_table(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variant\tchannels\toutput_dims\thits@1\thits@10\tmrr\n")
        for r in rows:
            dims = ",".join(f"{k}:{v}" for k, v in r.output_dims.items())
            fh.write(f"{r.variant}\t{','.join(r.channels)}\t{dims}\t{r.metrics['hits@1']:.4f}\t"
                     f"{r.metrics['hits@10']:.4f}\t{r.metrics['mrr']:.4f}\n")
