# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: template scoring, score accumulation, class statistics.

Summation order matches ``_pykernels`` exactly for the scoring paths.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def class_scores(const double[:, ::1] features, const double[:, ::1] templates):
    cdef Py_ssize_t n = features.shape[0]
    cdef Py_ssize_t p = features.shape[1]
    cdef Py_ssize_t c = templates.shape[0]
    if templates.shape[1] != p:
        raise ValueError("feature / template width mismatch")
    out = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, k, j
    cdef double s
    with nogil:
        for i in range(n):
            for k in range(c):
                s = 0.0
                for j in range(p):
                    s = s + features[i, j] * templates[k, j]
                o[i, k] = s
    return out


def accumulate_ranks(const double[:, :, ::1] terms, const double[::1] weights,
                     int k_true, const Py_ssize_t[::1] checkpoints):
    cdef Py_ssize_t t_count = terms.shape[0]
    cdef Py_ssize_t n = terms.shape[1]
    cdef Py_ssize_t c = terms.shape[2]
    cdef Py_ssize_t n_cp = checkpoints.shape[0]
    if weights.shape[0] != t_count:
        raise ValueError("one weight per score term required")
    L_arr = np.zeros(c, dtype=np.float64)
    ranks_arr = np.empty(n_cp, dtype=np.int64)
    cdef double[::1] L = L_arr
    cdef long long[::1] ranks = ranks_arr
    cdef Py_ssize_t i, t, k, cp = 0, r
    cdef double w, ref
    with nogil:
        for i in range(n):
            for t in range(t_count):
                w = weights[t]
                if w == 1.0:
                    for k in range(c):
                        L[k] = L[k] + terms[t, i, k]
                else:
                    for k in range(c):
                        L[k] = L[k] + w * terms[t, i, k]
            while cp < n_cp and checkpoints[cp] == i + 1:
                ref = L[k_true]
                r = 0
                for k in range(c):
                    if L[k] > ref:
                        r += 1
                ranks[cp] = r
                cp += 1
    return L_arr, ranks_arr


def class_stats(const double[:, ::1] x, const cnp.uint8_t[::1] labels, int n_classes):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t s = x.shape[1]
    if labels.shape[0] != n:
        raise ValueError("one label per row required")
    counts_arr = np.zeros(n_classes, dtype=np.int64)
    sums_arr = np.zeros((n_classes, s), dtype=np.float64)
    sq_arr = np.zeros((n_classes, s), dtype=np.float64)
    cdef long long[::1] counts = counts_arr
    cdef double[:, ::1] sums = sums_arr
    cdef double[:, ::1] sq = sq_arr
    cdef Py_ssize_t i, j, c
    cdef double v
    with nogil:
        for i in range(n):
            c = labels[i]
            counts[c] += 1
            for j in range(s):
                v = x[i, j]
                sums[c, j] += v
                sq[c, j] += v * v
    return counts_arr, sums_arr, sq_arr
