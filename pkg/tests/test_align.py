import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raea import align
from raea.align import (LinearMaxMargin, SimilarityMatrix, bootstrap_ci, ensemble_average, ensemble_classifier,
                        ensemble_preweighted, ensemble_weighted, gold_ranks, hits_at_k, metric_report, mrr,
                        ndcg_at_k, precision_recall_at_k, preweights, similarity_matrix, top_k)

from oracles import brute_metrics


def _identity(n=5):
    return SimilarityMatrix(np.eye(n))


def _gold(n):
    return [(i, i) for i in range(n)]


def _unit(r, n, d):
    x = r.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_similarity_is_cosine():
    r = np.random.default_rng(0)
    e = _unit(r, 4, 6)
    np.testing.assert_allclose(np.diag(similarity_matrix(e, e).scores), 1.0)
    assert similarity_matrix(np.eye(2), np.eye(2)[::-1]).scores.tolist() == [[0, 1], [1, 0]]
    with pytest.raises(ValueError):
        similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


def test_similarity_row_ids_select_rows():
    e = np.arange(12.0).reshape(4, 3)
    s = similarity_matrix(e, e, row_ids=[2, 0])
    assert s.row_ids.tolist() == [2, 0]
    np.testing.assert_allclose(s.scores, e[[2, 0]] @ e.T)


def test_metric_examples():
    sim = _identity()
    assert hits_at_k(sim, _gold(5), 1) == 1.0 and mrr(sim, _gold(5)) == 1.0 and ndcg_at_k(sim, _gold(5), 10) == 1.0
    one = SimilarityMatrix([[0.9, 0.5, 0.7]])
    assert mrr(one, [(0, 1)]) == pytest.approx(1 / 3)
    assert mrr(SimilarityMatrix([[0.9, 0.8, 0.1]]), [(0, 1)]) == 0.5
    assert ndcg_at_k(one, [(0, 1)], 10) == 0.5
    assert precision_recall_at_k(one, [(0, 1)], 10) == (0.1, 1.0)


def test_missing_gold_counts_as_miss():
    sim = SimilarityMatrix(np.eye(3), col_ids=[0, 1, 2])
    assert gold_ranks(sim, [(0, 0), (1, 99)]).tolist() == [1, -1]
    rep = metric_report(sim, [(0, 0), (1, 99)], n_resamples=10)
    assert rep.n_missing_gold == 1 and rep["hits@1"] == 0.5


def test_ties_break_by_column_id():
    sim = SimilarityMatrix(np.zeros((1, 4)), col_ids=[7, 3, 5, 9])
    assert gold_ranks(sim, [(0, 3)]).tolist() == [1]
    assert gold_ranks(sim, [(0, 7)]).tolist() == [3]
    assert [c for c, _ in top_k(sim, 3)[0]] == [3, 5, 7]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metrics_match_bruteforce(seed):
    r = np.random.default_rng(seed)
    scores = np.round(r.normal(size=(20, 20)), 1)
    cols = r.permutation(30)[:20]
    gold_cols = [int(cols[j]) if r.random() > 0.1 else 1000 for j in r.integers(0, 20, size=20)]
    sim = SimilarityMatrix(scores, col_ids=cols)
    gold = list(enumerate(gold_cols))
    want = brute_metrics(scores, gold_cols, cols)
    got = metric_report(sim, gold, n_resamples=1).values
    for name, v in want.items():
        assert abs(got[name][0] - v) <= 1e-12, name


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rank_invariance_under_monotone_maps(seed):
    r = np.random.default_rng(seed)
    s = r.normal(size=(10, 12))
    gold = [(i, int(j)) for i, j in enumerate(r.integers(0, 12, size=10))]
    a, b = SimilarityMatrix(s), SimilarityMatrix(np.tanh(3 * s) + 5)
    assert metric_report(a, gold, n_resamples=5).values == metric_report(b, gold, n_resamples=5).values
    assert [[c for c, _ in v] for v in top_k(a, 4).values()] == [[c for c, _ in v] for v in top_k(b, 4).values()]


def test_bootstrap_brackets_and_reproducible():
    r = np.random.default_rng(5)
    sim = SimilarityMatrix(r.normal(size=(50, 50)) + 2 * np.eye(50))
    gold = _gold(50)
    lo, hi = bootstrap_ci(lambda s, g: hits_at_k(s, g, 1), sim, gold, rng_seed=3)
    point = hits_at_k(sim, gold, 1)
    assert lo <= point <= hi and lo < hi
    assert (lo, hi) == bootstrap_ci(lambda s, g: hits_at_k(s, g, 1), sim, gold, rng_seed=3)
    # the same interval by direct resampling
    idx = np.random.default_rng(3).integers(0, 50, size=(1000, 50))
    vals = [hits_at_k(sim, [gold[i] for i in row], 1) for row in idx]
    assert (lo, hi) == (min(np.percentile(vals, 2.5), point), max(np.percentile(vals, 97.5), point))
    rep = metric_report(sim, gold, rng_seed=3)
    assert rep.values["hits@1"] == (point, lo, hi)


def test_bootstrap_constant_metric():
    lo, hi = bootstrap_ci(lambda s, g: hits_at_k(s, g, 1), _identity(6), _gold(6))
    assert lo == hi == 1.0


def test_report_text_format():
    text = metric_report(_identity(3), _gold(3), n_resamples=10).to_text()
    assert text.splitlines()[:6] == ["queries: 3", "missing_gold: 0", "bootstrap_resamples: 10",
                                     "bootstrap_seed: 0", "metrics:", "  hits@1: 1.000000"]


def test_ensemble_average_examples():
    r = np.random.default_rng(1)
    A = SimilarityMatrix(r.normal(size=(4, 5)))
    assert np.array_equal(ensemble_average([A, A]).scores, A.scores)
    assert np.array_equal(ensemble_average([A]).scores, A.scores)
    assert not ensemble_average([A, SimilarityMatrix(-A.scores)]).scores.any()
    with pytest.raises(ValueError):
        ensemble_average([])
    with pytest.raises(ValueError):
        ensemble_average([A, SimilarityMatrix(np.zeros((4, 4)))])


def test_preweights():
    assert preweights([0.5, 0.3, 0.2]).tolist() == [0.5, 0.3, 0.2]
    assert preweights([0.0, 0.0, 0.0]).tolist() == [1 / 3] * 3
    good, bad = _identity(4), SimilarityMatrix(np.eye(4)[::-1])
    out, w = ensemble_preweighted([good, bad, bad], _gold(4))
    assert w.tolist() == [1.0, 0.0, 0.0] and np.array_equal(out.scores, good.scores)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_preweighted_is_convex(seed, n):
    r = np.random.default_rng(seed)
    mats = [SimilarityMatrix(r.normal(size=(6, 6))) for _ in range(n)]
    out, w = ensemble_preweighted(mats, _gold(6))
    assert abs(w.sum() - 1) < 1e-9 and (w >= 0).all()
    stack = np.stack([m.scores for m in mats])
    assert (out.scores <= stack.max(0) + 1e-12).all() and (out.scores >= stack.min(0) - 1e-12).all()
    assert out.meta["weights"] == w.tolist()


def _cells(r, n_rows, n_cols):
    sep = r.normal(size=(n_rows, n_cols))
    sep[np.arange(n_rows), np.arange(n_rows)] += 4.0
    return sep


def test_classifier_prefers_separating_channel():
    r = np.random.default_rng(0)
    good = SimilarityMatrix(_cells(r, 20, 30))
    noise = SimilarityMatrix(r.normal(size=(20, 30)))
    out = ensemble_classifier([good, noise], _gold(20))
    w = out.meta["classifier_w"]
    assert w[0] > 0 and abs(w[0]) > 3 * abs(w[1])
    assert hits_at_k(out, _gold(20), 1) == hits_at_k(good, _gold(20), 1)


def test_classifier_identical_channels_keep_ranks():
    r = np.random.default_rng(2)
    m = SimilarityMatrix(_cells(r, 15, 15) * 0.5)
    out = ensemble_classifier([m, m, m], _gold(15))
    for k in (1, 5, 10):
        assert hits_at_k(out, _gold(15), k) == hits_at_k(m, _gold(15), k)


def test_classifier_symmetric_data_has_small_bias():
    r = np.random.default_rng(3)
    X = r.normal(size=(200, 2))
    X = np.vstack([X + [2, 0], -X - [2, 0]])
    y = np.r_[np.ones(200), -np.ones(200)]
    clf = LinearMaxMargin().fit(X, y)
    assert abs(clf.b) < 0.05 and clf.w[0] > 0


def test_classifier_needs_two_classes():
    with pytest.raises(ValueError):
        LinearMaxMargin().fit(np.ones((3, 2)), np.ones(3))


def test_top_k_examples():
    assert {q: [c for c, _ in v] for q, v in top_k(_identity(3), 1).items()} == {0: [0], 1: [1], 2: [2]}
    flat = SimilarityMatrix(np.zeros((1, 5)))
    assert [c for c, _ in top_k(flat, 3)[0]] == [0, 1, 2]
    assert len(top_k(flat, 50)[0]) == 5
    limited = top_k(SimilarityMatrix(np.eye(4)), 10, candidates={0: {2, 3}, 1: set()})
    assert [c for c, _ in limited[0]] == [2, 3] and limited[1] == [] and limited[2] == []


def test_write_top_k(tmp_path):
    path = tmp_path / "t.tsv"
    align.write_top_k(path, top_k(_identity(2), 1), ["a", "b"], ["x", "y"])
    assert path.read_text().splitlines() == ["query_id\trank\tcandidate_id\tscore", "a\t1\tx\t1.000000",
                                             "b\t1\ty\t1.000000"]


def test_classifier_on_uninformative_channels_keeps_ranks():
    r = np.random.default_rng(5)
    m = SimilarityMatrix(r.normal(size=(30, 30)))
    gold = [(i, int(j)) for i, j in enumerate(r.permutation(30))]
    out = ensemble_classifier([m, m], gold)
    assert min(out.meta["classifier_w"]) > 0
    for k in (1, 5, 10):
        assert hits_at_k(out, gold, k) == hits_at_k(m, gold, k)


def test_nonneg_projection_and_uniform_fallback():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([1, 1, -1, -1])  # higher score means negative: unconstrained weight goes negative
    assert LinearMaxMargin().fit(X, y).w[0] < 0
    assert LinearMaxMargin(nonneg=True).fit(X, y).w.tolist() == [1.0]
