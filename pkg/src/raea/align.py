"""Similarity matrices, channel ensembles, ranking metrics and Top-K output.

Ranking convention (used by every metric and by ``top_k``): candidates are
ordered by descending score, ties broken by ascending column id.  A gold
target missing from the columns counts as a miss (rank -1 internally).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass
class SimilarityMatrix:
    scores: np.ndarray
    row_ids: np.ndarray = None
    col_ids: np.ndarray = None
    tag: str = "ensemble"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2:
            raise ValueError(f"similarity scores must be 2-D, got {self.scores.shape}")
        n, m = self.scores.shape
        self.row_ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        self.col_ids = np.arange(m) if self.col_ids is None else np.asarray(self.col_ids, dtype=np.int64)
        if self.row_ids.shape != (n,) or self.col_ids.shape != (m,):
            raise ValueError("row/col id arrays do not match the score shape")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("similarity scores must be finite")

    @property
    def shape(self):
        return self.scores.shape

    def restrict(self, row_ids=None, col_ids=None):
        r = self._positions(self.row_ids, row_ids, "row")
        c = self._positions(self.col_ids, col_ids, "column")
        return SimilarityMatrix(self.scores[np.ix_(r, c)], self.row_ids[r], self.col_ids[c],
                                self.tag, dict(self.meta))

    @staticmethod
    def _positions(ids, wanted, what):
        if wanted is None:
            return np.arange(ids.size)
        lookup = {int(v): i for i, v in enumerate(ids)}
        try:
            return np.array([lookup[int(v)] for v in wanted], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"{what} id {exc.args[0]} not present") from None


def similarity_matrix(emb_src, emb_tgt, row_ids=None, col_ids=None, tag="channel"):
    """Cosine similarity of row-normalized embeddings (a plain dot product)."""
    a = np.asarray(getattr(emb_src, "value", emb_src), dtype=np.float64)
    b = np.asarray(getattr(emb_tgt, "value", emb_tgt), dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"embedding widths differ: {a.shape} vs {b.shape}")
    if row_ids is not None:
        a = a[np.asarray(row_ids)]
    if col_ids is not None:
        b = b[np.asarray(col_ids)]
    return SimilarityMatrix(a @ b.T, row_ids, col_ids, tag)


def _check_same(mats):
    if not mats:
        raise ValueError("no similarity matrices to ensemble")
    ref = mats[0]
    for m in mats[1:]:
        if (m.shape != ref.shape or not np.array_equal(m.row_ids, ref.row_ids)
                or not np.array_equal(m.col_ids, ref.col_ids)):
            raise ValueError("similarity matrices must share shape and ids")
    return ref


def ensemble_average(mats):
    ref = _check_same(mats)
    scores = np.mean([m.scores for m in mats], axis=0)
    return SimilarityMatrix(scores, ref.row_ids, ref.col_ids, "ensemble")


def ensemble_weighted(mats, weights):
    ref = _check_same(mats)
    scores = np.zeros(ref.shape)
    for w, m in zip(weights, mats):
        scores += w * m.scores
    return SimilarityMatrix(scores, ref.row_ids, ref.col_ids, "ensemble")


def preweights(hits):
    """Each channel's Hits@1 over the sum; uniform when every channel scores 0."""
    hits = np.asarray(hits, dtype=np.float64)
    total = hits.sum()
    if total <= 0:
        return np.full(hits.size, 1.0 / hits.size)
    return hits / total


def ensemble_preweighted(mats, val_pairs):
    """Weights = per-channel Hits@1 on ``val_pairs`` normalised to sum 1."""
    _check_same(mats)
    hits = [hits_at_k(m, val_pairs, 1) for m in mats]
    w = preweights(hits)
    out = ensemble_weighted(mats, w)
    out.meta["channel_hits1"] = hits
    out.meta["weights"] = w.tolist()
    return out, w


@dataclass
class LinearMaxMargin:
    """Linear classifier trained by full-batch subgradient descent on a class-balanced hinge.

    With ``nonneg`` the weights are projected onto w >= 0 after every step, so
    a higher channel score can never lower the decision value.  If every
    weight ends at zero the weights fall back to uniform.
    """

    reg: float = 1e-3
    steps: int = 2000
    lr: float = 0.5
    nonneg: bool = False
    w: np.ndarray = None
    b: float = 0.0

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        classes = set(np.unique(y).tolist())
        if classes != {-1.0, 1.0}:
            raise ValueError(f"classifier needs both classes, got labels {sorted(classes)}")
        n_pos, n_neg = (y > 0).sum(), (y < 0).sum()
        cw = np.where(y > 0, 0.5 / n_pos, 0.5 / n_neg)
        w = np.zeros(X.shape[1])
        b = 0.0
        for t in range(1, self.steps + 1):
            margin = y * (X @ w + b)
            active = margin < 1
            coef = cw * y * active
            gw = self.reg * w - X.T @ coef
            gb = -coef.sum()
            eta = self.lr / np.sqrt(t)
            w -= eta * gw
            b -= eta * gb
            if self.nonneg:
                np.maximum(w, 0.0, out=w)
        if self.nonneg and not w.any():
            w[:] = 1.0 / w.size
        self.w, self.b = w, float(b)
        return self

    def decision(self, X):
        return np.asarray(X) @ self.w + self.b


def ensemble_classifier(mats, train_pairs, n_neg=10, rng_seed=0, clf=None):
    """Fit a max-margin separator of aligned vs random non-aligned cells on the
    per-channel score vector; the ensemble score is its signed decision value.

    Weights are kept non-negative, so the ensemble is monotone in every channel.
    """
    ref = _check_same(mats)
    pairs = np.asarray(train_pairs, dtype=np.int64).reshape(-1, 2)
    row_pos = {int(v): i for i, v in enumerate(ref.row_ids)}
    col_pos = {int(v): i for i, v in enumerate(ref.col_ids)}
    pos = [(row_pos[a], col_pos[b]) for a, b in pairs if a in row_pos and b in col_pos]
    if not pos or ref.shape[1] < 2:
        raise ValueError("classifier ensemble needs aligned cells and at least two columns")
    rng = np.random.default_rng(rng_seed)
    neg = []
    for r, c in pos:
        for cc in rng.integers(0, ref.shape[1] - 1, size=n_neg):
            neg.append((r, int(cc) + (cc >= c)))
    cells = np.array(pos + neg)
    stack = np.stack([m.scores for m in mats], axis=-1)
    X = stack[cells[:, 0], cells[:, 1]]
    y = np.r_[np.ones(len(pos)), -np.ones(len(neg))]
    clf = (clf or LinearMaxMargin(nonneg=True)).fit(X, y)
    out = SimilarityMatrix(clf.decision(stack.reshape(-1, len(mats))).reshape(ref.shape),
                           ref.row_ids, ref.col_ids, "ensemble")
    out.meta["classifier_w"] = clf.w.tolist()
    out.meta["classifier_b"] = clf.b
    return out


# -- metrics -------------------------------------------------------------------

def gold_ranks(sim, gold):
    """Rank of each gold target in its source row (-1 when the target is not a column)."""
    gold = np.asarray(gold, dtype=np.int64).reshape(-1, 2)
    row_pos = {int(v): i for i, v in enumerate(sim.row_ids)}
    # the kernel breaks ties by position, so lay the columns out in id order
    order = np.argsort(sim.col_ids, kind="stable")
    col_pos = {int(v): i for i, v in enumerate(sim.col_ids[order])}
    try:
        rows = np.array([row_pos[int(a)] for a in gold[:, 0]], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"gold source {exc.args[0]} is not a row of the similarity matrix") from None
    cols = np.array([col_pos.get(int(b), -1) for b in gold[:, 1]], dtype=np.int64)
    return kernels.gold_ranks(sim.scores[np.ix_(rows, order)], cols)


def per_query(ranks, metric, k=None):
    found = ranks > 0
    r = np.where(found, ranks, 1).astype(np.float64)
    if metric == "hits":
        return (found & (ranks <= k)).astype(np.float64)
    if metric == "mrr":
        return np.where(found, 1.0 / r, 0.0)
    if metric == "ndcg":
        # one relevant item per query, so the ideal DCG is 1
        return np.where(found & (ranks <= k), 1.0 / np.log2(1.0 + r), 0.0)
    if metric == "precision":
        return (found & (ranks <= k)) / float(k)
    if metric == "recall":
        return (found & (ranks <= k)).astype(np.float64)
    raise ValueError(f"unknown metric {metric!r}")


def _mean(v):
    return float(v.mean()) if v.size else 0.0


def hits_at_k(sim, gold, k):
    return _mean(per_query(gold_ranks(sim, gold), "hits", k))


def mrr(sim, gold):
    return _mean(per_query(gold_ranks(sim, gold), "mrr"))


def ndcg_at_k(sim, gold, k):
    return _mean(per_query(gold_ranks(sim, gold), "ndcg", k))


def precision_recall_at_k(sim, gold, k):
    ranks = gold_ranks(sim, gold)
    return _mean(per_query(ranks, "precision", k)), _mean(per_query(ranks, "recall", k))


def bootstrap_indices(n, n_resamples, rng_seed):
    return np.random.default_rng(rng_seed).integers(0, n, size=(n_resamples, n))


def _percentile_interval(values, point):
    lo, hi = np.percentile(values, [2.5, 97.5])
    return float(min(lo, point)), float(max(hi, point))


def bootstrap_ci(metric_fn, sim, gold, n_resamples=1000, rng_seed=0):
    """95% percentile interval of ``metric_fn(sim, gold_resampled)`` over query resamples."""
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    gold = np.asarray(gold, dtype=np.int64).reshape(-1, 2)
    point = metric_fn(sim, gold)
    if gold.shape[0] == 0:
        return point, point
    idx = bootstrap_indices(gold.shape[0], n_resamples, rng_seed)
    values = np.array([metric_fn(sim, gold[i]) for i in idx])
    return _percentile_interval(values, point)


@dataclass
class MetricReport:
    n_queries: int
    n_missing_gold: int
    values: dict  # name -> (point, lo, hi)
    n_resamples: int
    rng_seed: int

    def __getitem__(self, name):
        return self.values[name][0]

    def to_text(self):
        lines = [f"queries: {self.n_queries}",
                 f"missing_gold: {self.n_missing_gold}",
                 f"bootstrap_resamples: {self.n_resamples}",
                 f"bootstrap_seed: {self.rng_seed}",
                 "metrics:"]
        for name, (point, lo, hi) in self.values.items():
            lines.append(f"  {name}: {point:.6f}")
            lines.append(f"    ci95_lo: {lo:.6f}")
            lines.append(f"    ci95_hi: {hi:.6f}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def metric_report(sim, gold, ks=(1, 10), ndcg_k=10, pr_k=10, n_resamples=1000, rng_seed=0):
    """All metrics with bootstrap intervals; one shared set of query resamples."""
    gold = np.asarray(gold, dtype=np.int64).reshape(-1, 2)
    ranks = gold_ranks(sim, gold)
    vectors = {f"hits@{k}": per_query(ranks, "hits", k) for k in ks}
    vectors["mrr"] = per_query(ranks, "mrr")
    vectors[f"ndcg@{ndcg_k}"] = per_query(ranks, "ndcg", ndcg_k)
    vectors[f"precision@{pr_k}"] = per_query(ranks, "precision", pr_k)
    vectors[f"recall@{pr_k}"] = per_query(ranks, "recall", pr_k)
    idx = bootstrap_indices(gold.shape[0], n_resamples, rng_seed) if gold.shape[0] else None
    values = {}
    for name, v in vectors.items():
        point = _mean(v)
        if idx is None:
            values[name] = (point, point, point)
        else:
            values[name] = (point,) + _percentile_interval(v[idx].mean(axis=1), point)
    return MetricReport(int(gold.shape[0]), int((ranks < 0).sum()), values, n_resamples, rng_seed)


# -- Top-K -----------------------------------------------------------------------

def top_k(sim, k, candidates=None):
    """Per row: up to ``k`` (candidate_id, score) pairs, best first.

    ``candidates`` optionally maps a row id to the set of column ids it may
    return (rough-filter output); rows absent from the mapping get nothing.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    out = {}
    col_ids = sim.col_ids
    for i, rid in enumerate(sim.row_ids):
        cols = np.arange(col_ids.size)
        if candidates is not None:
            allowed = candidates.get(int(rid), ())
            cols = cols[np.isin(col_ids, np.fromiter(allowed, dtype=np.int64, count=len(allowed)))]
        s = sim.scores[i, cols]
        order = np.lexsort((col_ids[cols], -s))[:k]
        out[int(rid)] = [(int(col_ids[cols[j]]), float(s[j])) for j in order]
    return out


def write_top_k(path, ranked, row_labels=None, col_labels=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query_id\trank\tcandidate_id\tscore\n")
        for q, items in ranked.items():
            ql = row_labels[q] if row_labels is not None else q
            for rank, (c, s) in enumerate(items, 1):
                cl = col_labels[c] if col_labels is not None else c
                fh.write(f"{ql}\t{rank}\t{cl}\t{s:.6f}\n")
