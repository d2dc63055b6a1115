"""Numba-compiled versions of the hot kernels (see ``_kernels_numpy``)."""

import numpy as np
from numba import njit


@njit(cache=True)
def segment_max(values, segments, n_segments):
    out = np.full(n_segments, -np.inf)
    for i in range(values.shape[0]):
        s = segments[i]
        if values[i] > out[s]:
            out[s] = values[i]
    return out


@njit(cache=True)
def _segment_sum_1d(values, segments, n_segments):
    out = np.zeros(n_segments)
    for i in range(values.shape[0]):
        out[segments[i]] += values[i]
    return out


@njit(cache=True)
def _segment_sum_2d(values, segments, n_segments):
    out = np.zeros((n_segments, values.shape[1]))
    for i in range(values.shape[0]):
        s = segments[i]
        for k in range(values.shape[1]):
            out[s, k] += values[i, k]
    return out


def segment_sum(values, segments, n_segments):
    if values.ndim == 1:
        return _segment_sum_1d(values, segments, n_segments)
    if values.ndim == 2:
        return _segment_sum_2d(np.ascontiguousarray(values), segments, n_segments)
    raise ValueError(f"segment_sum supports 1-D or 2-D values, got ndim={values.ndim}")


@njit(cache=True)
def gold_ranks(scores, gold_cols):
    n_rows, n_cols = scores.shape
    ranks = np.full(n_rows, -1, dtype=np.int64)
    for i in range(n_rows):
        g = gold_cols[i]
        if g < 0:
            continue
        gs = scores[i, g]
        r = 1
        for j in range(n_cols):
            s = scores[i, j]
            if s > gs or (s == gs and j < g):
                r += 1
        ranks[i] = r
    return ranks


@njit(cache=True)
def pairwise_l1(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += abs(a[i, k] - b[j, k])
            out[i, j] = acc
    return out
