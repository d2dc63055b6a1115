"""Channel training: margin loss with nearest-neighbour negatives, Adagrad,
early stopping on validation Hits@1, and grid search over (lr, l2)."""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import kernels
from .align import hits_at_k, SimilarityMatrix

logger = logging.getLogger(__name__)

PAPER_LR_GRID = (1e-3, 4e-3, 7e-3)
PAPER_L2_GRID = (0.0, 1e-4, 1e-3)


class TrainingError(RuntimeError):
    """Raised when the loss becomes non-finite."""


@dataclass
class TrainConfig:
    margin: float = 3.0
    n_neg: int = 15
    resample_every: int = 50
    max_epochs: int = 1500
    patience: int = 50
    lr_grid: tuple = PAPER_LR_GRID
    l2_grid: tuple = PAPER_L2_GRID
    distance: str = "L1"
    rng_seed: int = 0
    monitor_frac: float = 0.1
    adagrad_eps: float = 1e-10

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if not self.lr_grid or not self.l2_grid:
            raise ValueError("lr_grid and l2_grid must be non-empty")
        if self.distance not in ("L1", "L2"):
            raise ValueError(f"distance must be L1 or L2, got {self.distance!r}")
        if self.n_neg < 0 or self.resample_every < 1 or self.max_epochs < 1:
            raise ValueError("n_neg >= 0, resample_every >= 1 and max_epochs >= 1 required")
        self.lr_grid = tuple(float(x) for x in self.lr_grid)
        self.l2_grid = tuple(float(x) for x in self.l2_grid)


@dataclass
class NegativeSampleSet:
    """Flattened negatives: ``src_pair[i]`` is the seed-pair index that ``src_neg[i]`` belongs to."""

    src_pair: np.ndarray
    src_neg: np.ndarray
    tgt_pair: np.ndarray
    tgt_neg: np.ndarray
    epoch: int = 0

    def for_pair(self, k):
        return (self.src_neg[self.src_pair == k].tolist(), self.tgt_neg[self.tgt_pair == k].tolist())


def _nearest(emb, anchors, n_neg, exclude_self=True):
    d = kernels.pairwise_l1(emb[anchors], emb)
    pair_idx, neg = [], []
    for k, a in enumerate(anchors):
        order = np.argsort(d[k], kind="stable")
        picked = [int(j) for j in order if not (exclude_self and j == a)][:n_neg]
        pair_idx.extend([k] * len(picked))
        neg.extend(picked)
    return np.array(pair_idx, dtype=np.int64), np.array(neg, dtype=np.int64)


def sample_negatives(emb_src, emb_tgt, seeds, cfg, epoch=0):
    """Nearest same-graph entities (L1 on the given rows), ties broken by id.

    The anchor's counterpart lives in the other graph, so excluding the anchor
    itself is what keeps the counterpart out of the list.
    """
    emb_src = np.asarray(getattr(emb_src, "value", emb_src))
    emb_tgt = np.asarray(getattr(emb_tgt, "value", emb_tgt))
    seeds = np.asarray(seeds, dtype=np.int64).reshape(-1, 2)
    for emb, side in ((emb_src, "source"), (emb_tgt, "target")):
        if emb.shape[0] < cfg.n_neg + 2:
            logger.warning("%s graph has %d entities, fewer than n_neg + 2 = %d; using all available",
                           side, emb.shape[0], cfg.n_neg + 2)
    sp, sn = _nearest(emb_src, seeds[:, 0], cfg.n_neg)
    tp, tn = _nearest(emb_tgt, seeds[:, 1], cfg.n_neg)
    return NegativeSampleSet(sp, sn, tp, tn, epoch)


def _distance(a, b, kind):
    diff = dc.sub(a, b)
    if kind == "L1":
        return dc.row_sum(dc.absolute(diff))
    # epsilon keeps the derivative finite at coincident points
    return dc.sqrt(dc.add_scalar(dc.row_sum(dc.square(diff)), 1e-12))


def margin_loss(emb_src, emb_tgt, seeds, negs, cfg):
    """Sum over seed pairs of the two hinge families against source and target negatives."""
    seeds = np.asarray(seeds, dtype=np.int64).reshape(-1, 2)
    if seeds.shape[0] == 0:
        return dc.as_tensor(np.asarray(0.0))
    emb_src, emb_tgt = dc.as_tensor(emb_src), dc.as_tensor(emb_tgt)
    d_pos = _distance(dc.gather(emb_src, seeds[:, 0]), dc.gather(emb_tgt, seeds[:, 1]), cfg.distance)
    terms = []
    if negs.src_neg.size:
        d_neg = _distance(dc.gather(emb_src, negs.src_neg),
                          dc.gather(emb_tgt, seeds[negs.src_pair, 1]), cfg.distance)
        terms.append(dc.total(dc.relu(dc.add_scalar(dc.sub(dc.gather(d_pos, negs.src_pair), d_neg),
                                                     cfg.margin))))
    if negs.tgt_neg.size:
        d_neg = _distance(dc.gather(emb_src, seeds[negs.tgt_pair, 0]),
                          dc.gather(emb_tgt, negs.tgt_neg), cfg.distance)
        terms.append(dc.total(dc.relu(dc.add_scalar(dc.sub(dc.gather(d_pos, negs.tgt_pair), d_neg),
                                                     cfg.margin))))
    if not terms:
        return dc.scale(dc.total(d_pos), 0.0)
    loss = terms[0]
    for t in terms[1:]:
        loss = dc.add(loss, t)
    return loss


class Adagrad:
    def __init__(self, params, lr, l2=0.0, eps=1e-10):
        self.params = list(params)
        self.lr = float(lr)
        self.l2 = float(l2)
        self.eps = eps
        self.acc = {p.name: np.zeros_like(p.value) for p in self.params}

    def step(self):
        for p in self.params:
            g = p.grad + self.l2 * p.value if self.l2 else p.grad
            acc = self.acc[p.name]
            acc += g * g
            p.value -= self.lr * g / (np.sqrt(acc) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    hits1: float
    seconds: float


@dataclass
class TrainResult:
    model: object
    history: list
    best_epoch: int
    best_hits1: float
    lr: float
    l2: float
    monitor_pairs: np.ndarray
    train_pairs: np.ndarray
    stopped_early: bool = False

    def write_history(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch\tloss\thits1\tseconds\n")
            for r in self.history:
                fh.write(f"{r.epoch}\t{r.loss:.10g}\t{r.hits1:.6f}\t{r.seconds:.3f}\n")


def monitor_split(train_pairs, valid_pairs, cfg):
    """Validation pairs when present, else a held-out ``monitor_frac`` of the training pairs."""
    train_pairs = np.asarray(train_pairs, dtype=np.int64).reshape(-1, 2)
    valid_pairs = np.asarray(valid_pairs, dtype=np.int64).reshape(-1, 2)
    if valid_pairs.shape[0]:
        return train_pairs, valid_pairs
    n_hold = int(round(cfg.monitor_frac * train_pairs.shape[0]))
    if n_hold == 0 or n_hold >= train_pairs.shape[0]:
        return train_pairs, train_pairs
    order = np.random.default_rng(cfg.rng_seed).permutation(train_pairs.shape[0])
    hold = np.sort(order[:n_hold])
    keep = np.sort(order[n_hold:])
    return train_pairs[keep], train_pairs[hold]


def pair_hits1(emb_src, emb_tgt, pairs):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        return 0.0
    sim = SimilarityMatrix(emb_src[pairs[:, 0]] @ emb_tgt.T,
                           row_ids=pairs[:, 0], col_ids=np.arange(emb_tgt.shape[0]))
    return hits_at_k(sim, pairs, 1)


def train_channel(model, inputs, train_pairs, valid_pairs, cfg, lr=None, l2=None, log_every=0):
    """Full-batch training of one channel; returns the best-Hits@1 snapshot.

    ``inputs`` is the (source, target) pair of ``net.ChannelInput``.  Stops when
    ``patience`` epochs pass without a strictly higher monitoring Hits@1.
    """
    from .net import channel_forward

    lr = cfg.lr_grid[0] if lr is None else lr
    l2 = cfg.l2_grid[0] if l2 is None else l2
    src_in, tgt_in = inputs
    fit_pairs, mon_pairs = monitor_split(train_pairs, valid_pairs, cfg)
    params = model.parameters()
    opt = Adagrad(params, lr, l2, cfg.adagrad_eps)
    history = []
    best_hits, best_epoch, best_state = -1.0, -1, model.state()
    negs = None
    t0 = time.perf_counter()
    stopped = False
    for epoch in range(cfg.max_epochs):
        with dc.Tape() as tape:
            e_src = channel_forward(model, src_in, "src")
            e_tgt = channel_forward(model, tgt_in, "tgt")
            if negs is None or epoch - negs.epoch >= cfg.resample_every:
                negs = sample_negatives(e_src.value, e_tgt.value, fit_pairs, cfg, epoch)
            loss = margin_loss(e_src, e_tgt, fit_pairs, negs, cfg)
            loss_value = float(loss.value)
            if not math.isfinite(loss_value):
                raise TrainingError(f"non-finite loss {loss_value} at epoch {epoch} (lr={lr}, l2={l2})")
            tape.backward(loss)
        hits = pair_hits1(e_src.value, e_tgt.value, mon_pairs)
        history.append(EpochRecord(epoch, loss_value, hits, time.perf_counter() - t0))
        if hits > best_hits:
            best_hits, best_epoch, best_state = hits, epoch, model.state()
        if log_every and epoch % log_every == 0:
            logger.info("%s epoch %d loss %.4f hits@1 %.4f", model.kind.value, epoch, loss_value, hits)
        if epoch - best_epoch >= cfg.patience:
            stopped = True
            break
        opt.step()
    model.load_state(best_state)
    return TrainResult(model, history, best_epoch, best_hits, lr, l2, mon_pairs, fit_pairs, stopped)


@dataclass
class GridResult:
    best: TrainResult
    table: list = field(default_factory=list)  # (lr, l2, best_hits1, best_epoch)


def grid_search(make_model, inputs, train_pairs, valid_pairs, cfg, lr_grid=None, l2_grid=None):
    """Train every (lr, l2) cell from a fresh model; ties go to smaller lr, then smaller l2."""
    lr_grid = sorted(cfg.lr_grid if lr_grid is None else lr_grid)
    l2_grid = sorted(cfg.l2_grid if l2_grid is None else l2_grid)
    best, table = None, []
    for lr in lr_grid:
        for l2 in l2_grid:
            res = train_channel(make_model(), inputs, train_pairs, valid_pairs, cfg, lr=lr, l2=l2)
            table.append((lr, l2, res.best_hits1, res.best_epoch))
            if best is None or res.best_hits1 > best.best_hits1:
                best = res
    return GridResult(best, table)


@dataclass(frozen=True)
class CostParams:
    P1: int
    P2: int
    e: int
    F_neg: int
    N_neg: int
    N_s: int
    T_s: int
    N_t: int
    T_t: int


def estimate_training_cost(p):
    """P1 P2 (e + e/F_neg N_neg) N_s N_t T_s T_t, exact when e*N_neg divides by F_neg.

    Returns an int when the result is integral, else a ``fractions.Fraction``.
    """
    from fractions import Fraction

    for name in ("P1", "P2", "e", "F_neg", "N_s", "T_s", "N_t", "T_t"):
        if getattr(p, name) <= 0:
            raise ValueError(f"{name} must be positive")
    if p.N_neg < 0:
        raise ValueError("N_neg must be non-negative")
    per_epoch = Fraction(p.e) + Fraction(p.e * p.N_neg, p.F_neg)
    t = p.P1 * p.P2 * per_epoch * p.N_s * p.N_t * p.T_s * p.T_t
    return int(t) if t.denominator == 1 else t


__all__ = [
    "Adagrad", "CostParams", "EpochRecord", "GridResult", "NegativeSampleSet", "TrainConfig",
    "TrainResult", "TrainingError", "estimate_training_cost", "grid_search", "margin_loss",
    "monitor_split", "sample_negatives", "train_channel",
]
