"""Pure-numpy fallback for the compiled kernels.

``class_scores`` and ``accumulate_ranks`` reproduce the compiled arithmetic
order, so both backends give bit-identical scores and ranks.
"""

import numpy as np


def class_scores(features, templates):
    features = np.ascontiguousarray(features, dtype=np.float64)
    templates = np.ascontiguousarray(templates, dtype=np.float64)
    if templates.shape[1] != features.shape[1]:
        raise ValueError("feature / template width mismatch")
    out = np.zeros((features.shape[0], templates.shape[0]), dtype=np.float64)
    # sequential over the feature axis: s = ((0 + a0 b0) + a1 b1) + ...
    for j in range(features.shape[1]):
        out += features[:, j, None] * templates[None, :, j]
    return out


def accumulate_ranks(terms, weights, k_true, checkpoints):
    terms = np.asarray(terms, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != terms.shape[0]:
        raise ValueError("one weight per score term required")
    checkpoints = np.asarray(checkpoints, dtype=np.intp)
    L = np.zeros(terms.shape[2], dtype=np.float64)
    ranks = np.empty(len(checkpoints), dtype=np.int64)
    cp = 0
    for i in range(terms.shape[1]):
        for t, w in enumerate(weights):
            if w == 1.0:
                L += terms[t, i]
            else:
                L += w * terms[t, i]
        while cp < len(checkpoints) and checkpoints[cp] == i + 1:
            ranks[cp] = np.count_nonzero(L > L[k_true])
            cp += 1
    return L, ranks


def class_stats(x, labels, n_classes):
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape[0] != x.shape[0]:
        raise ValueError("one label per row required")
    counts = np.bincount(labels, minlength=n_classes).astype(np.int64)
    sums = np.zeros((n_classes, x.shape[1]))
    sq = np.zeros((n_classes, x.shape[1]))
    order = np.argsort(labels, kind="stable")
    present = np.flatnonzero(counts)
    if present.size:
        starts = np.concatenate(([0], np.cumsum(counts[present])[:-1]))
        xs = x[order]
        sums[present] = np.add.reduceat(xs, starts, axis=0)
        sq[present] = np.add.reduceat(xs * xs, starts, axis=0)
    return counts, sums, sq
