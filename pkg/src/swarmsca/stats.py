import numpy as np

from . import kernels


def class_moments(x, labels, n_classes=256):
    """Per-class means and (population) variances.

    Returns ``(counts, means, variances)``; absent classes have zero rows.
    """
    counts, sums, sq = kernels.class_stats(x, labels, n_classes)
    present = counts > 0
    means = np.zeros_like(sums)
    var = np.zeros_like(sums)
    c = counts[present, None].astype(np.float64)
    means[present] = sums[present] / c
    var[present] = np.maximum(sq[present] / c - means[present] ** 2, 0.0)
    return counts, means, var


def snr_profile(x, labels, n_classes=256):
    """Per-sample SNR: variance of class means over mean within-class variance.

    Only classes that occur in ``labels`` enter either moment.
    """
    counts, means, var = class_moments(x, labels, n_classes)
    present = counts > 0
    if np.count_nonzero(present) < 2:
        return np.zeros(np.asarray(x).shape[1])
    signal = means[present].var(axis=0)
    noise = var[present].mean(axis=0)
    # moments from running sums leave rounding residue on constant samples;
    # anything below a relative floor of the data's power counts as zero
    x = np.asarray(x, dtype=np.float64)
    floor = 1e-12 * max(float(np.mean(x * x)), np.finfo(np.float64).tiny)
    signal = np.where(signal > floor, signal, 0.0)
    noise = np.where(noise > floor, noise, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(noise > 0, signal / np.where(noise > 0, noise, 1.0), np.where(signal > 0, np.inf, 0.0))
    return snr
