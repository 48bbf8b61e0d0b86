"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``SWARMSCA_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels as pyimpl

try:
    if os.environ.get("SWARMSCA_PURE_PYTHON", "0") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _ckernels as cimpl
except ImportError:
    cimpl = None

_impl = cimpl if cimpl is not None else pyimpl
BACKEND = "cython" if cimpl is not None else "python"


def class_scores(features, templates):
    """Dot product of every feature row with every template row, shape (n, n_templates)."""
    return _impl.class_scores(
        np.ascontiguousarray(features, dtype=np.float64),
        np.ascontiguousarray(templates, dtype=np.float64),
    )


def accumulate_ranks(terms, weights, k_true, checkpoints):
    """Accumulate weighted per-trace key scores; rank of ``k_true`` at each checkpoint.

    ``terms`` has shape (n_terms, n_traces, 256). Checkpoints are 1-based trace
    counts, strictly increasing.
    """
    return _impl.accumulate_ranks(
        np.ascontiguousarray(terms, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        int(k_true),
        np.ascontiguousarray(checkpoints, dtype=np.intp),
    )


def class_stats(x, labels, n_classes=256):
    """Per-class counts, sums and sums of squares of the rows of ``x``."""
    return _impl.class_stats(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(labels, dtype=np.uint8),
        int(n_classes),
    )
