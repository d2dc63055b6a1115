"""Backend selection for the numeric kernels.

Numba-compiled kernels are used when numba imports cleanly, unless the
environment variable ``RAEA_DISABLE_JIT`` is set to a truthy value
(``1``, ``true``, ``yes``), in which case the pure-numpy path is used.
The choice is made once at import time.
"""

import logging
import os

import numpy as np

from . import _kernels_numpy

logger = logging.getLogger(__name__)

_TRUTHY = {"1", "true", "yes", "on"}


def _jit_requested():
    return os.environ.get("RAEA_DISABLE_JIT", "").strip().lower() not in _TRUTHY


_impl = _kernels_numpy
BACKEND = "numpy"
if _jit_requested():
    try:
        from . import _kernels_numba as _impl  # noqa: F811
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        logger.warning("numba unavailable, falling back to numpy kernels")


def segment_max(values, segments, n_segments):
    """Per-segment maximum of a 1-D array; empty segments give ``-inf``."""
    return _impl.segment_max(np.ascontiguousarray(values, dtype=np.float64),
                             np.ascontiguousarray(segments, dtype=np.int64), int(n_segments))


def segment_sum(values, segments, n_segments):
    """Scatter-add rows of ``values`` into ``n_segments`` buckets."""
    return _impl.segment_sum(np.ascontiguousarray(values, dtype=np.float64),
                             np.ascontiguousarray(segments, dtype=np.int64), int(n_segments))


def gold_ranks(scores, gold_cols):
    return _impl.gold_ranks(np.ascontiguousarray(scores, dtype=np.float64),
                            np.ascontiguousarray(gold_cols, dtype=np.int64))


def pairwise_l1(a, b):
    return _impl.pairwise_l1(np.ascontiguousarray(a, dtype=np.float64),
                             np.ascontiguousarray(b, dtype=np.float64))
