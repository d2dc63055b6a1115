"""Pure-numpy reference versions of the hot kernels.

Every function here has a twin in ``_kernels_numba`` with the same signature
and the same summation order, so the two backends agree bitwise on the
reductions they share.
"""

import numpy as np


def segment_max(values, segments, n_segments):
    out = np.full(n_segments, -np.inf)
    np.maximum.at(out, segments, values)
    return out


def segment_sum(values, segments, n_segments):
    out = np.zeros((n_segments,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, segments, values)
    return out


def gold_ranks(scores, gold_cols):
    """1-based rank of ``gold_cols[i]`` in row ``i`` (descending, column-id tie-break).

    A negative gold column means the gold target is not among the columns;
    its rank is reported as -1.
    """
    n_rows = scores.shape[0]
    ranks = np.full(n_rows, -1, dtype=np.int64)
    present = gold_cols >= 0
    if not present.any():
        return ranks
    rows = np.nonzero(present)[0]
    sub = scores[rows]
    g = gold_cols[rows]
    gold_scores = sub[np.arange(rows.size), g][:, None]
    higher = (sub > gold_scores).sum(axis=1)
    cols = np.arange(scores.shape[1])[None, :]
    tied_before = ((sub == gold_scores) & (cols < g[:, None])).sum(axis=1)
    ranks[rows] = 1 + higher + tied_before
    return ranks


def pairwise_l1(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    # chunked to bound the (rows, cols, dim) temporary
    step = max(1, 2_000_000 // max(1, b.shape[0] * max(1, a.shape[1])))
    for start in range(0, a.shape[0], step):
        block = a[start:start + step, None, :] - b[None, :, :]
        out[start:start + step] = np.abs(block).sum(axis=2)
    return out
