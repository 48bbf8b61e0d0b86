"""Multi-receiver fusion: per-trace normalisation, SNR-weighted averaging and
the centered second-order product that cancels a Boolean mask."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConstantTraceError, EmptyPOIError, LengthMismatchError, NonPositiveError

MODES = ("elementwise", "cross_window")


@dataclass(frozen=True)
class CombineWeights:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-12):
            raise ValueError("weights must sum to 1")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def equal(cls, n: int) -> "CombineWeights":
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class SecondOrderFeature:
    """Centered-product feature of one trace pair.

    ``values`` has length sample_count (elementwise) or |poi_b|*|poi_c|
    (cross_window, row-major over (poi_b, poi_c)).
    """

    values: np.ndarray
    mode: str
    shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.shape and int(np.prod(self.shape)) != len(self.values):
            raise ValueError("values length does not match mode shape")

    def grid(self) -> np.ndarray:
        """Cross-window values as a (|poi_b|, |poi_c|) matrix."""
        return np.asarray(self.values).reshape(self.shape)


def preprocess(trace: np.ndarray) -> np.ndarray:
    """Remove the mean and scale to unit (population) standard deviation."""
    x = np.asarray(trace, dtype=np.float64)
    sd = x.std()
    if not sd > 0:
        raise ConstantTraceError("cannot normalise a constant trace")
    return (x - x.mean()) / sd


def preprocess_rows(x: np.ndarray) -> np.ndarray:
    """:func:`preprocess` applied to every row of a matrix."""
    x = np.asarray(x, dtype=np.float64)
    sd = x.std(axis=1, keepdims=True)
    if np.any(~(sd > 0)):
        raise ConstantTraceError("constant row(s) cannot be normalised")
    return (x - x.mean(axis=1, keepdims=True)) / sd


def mrc_weights(snr_estimates: Sequence[float]) -> CombineWeights:
    """Maximal-ratio weights proportional to each receiver's SNR estimate."""
    s = np.asarray(snr_estimates, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0:
        raise ValueError("need at least one SNR estimate")
    if np.any(~(s > 0)):
        raise NonPositiveError("SNR estimates must be strictly positive")
    return CombineWeights(s / s.sum())


def coherent_combine(aligned: Sequence[np.ndarray], w: CombineWeights) -> np.ndarray:
    """Weighted sum of aligned receiver buffers (vectors or equally shaped matrices)."""
    arrs = [np.asarray(a, dtype=np.float64) for a in aligned]
    if len(arrs) != len(w):
        raise LengthMismatchError(f"{len(arrs)} buffers but {len(w)} weights")
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise LengthMismatchError("buffers differ in length")
    out = np.zeros(shape, dtype=np.float64)
    for a, wi in zip(arrs, w.weights):
        out += wi * a
    return out


def _check_pois(poi_b, poi_c, n: int) -> tuple[np.ndarray, np.ndarray]:
    pb = np.asarray(poi_b, dtype=np.intp)
    pc = np.asarray(poi_c, dtype=np.intp)
    if pb.size == 0 or pc.size == 0:
        raise EmptyPOIError("cross_window mode needs non-empty POI sets")
    half = n / 2
    if pb.min() < 0 or pb.max() >= half:
        raise ValueError("poi_b must lie in the first half of the trace")
    if pc.min() < half or pc.max() >= n:
        raise ValueError("poi_c must lie in the second half of the trace")
    return pb, pc


def second_order_product(
    t_b: np.ndarray,
    t_c: np.ndarray,
    means_b: np.ndarray,
    means_c: np.ndarray,
    mode: str = "cross_window",
    poi_b: Sequence[int] = (),
    poi_c: Sequence[int] = (),
    check_halves: bool = True,
) -> SecondOrderFeature:
    """Centered product of two receivers' traces.

    ``elementwise`` multiplies same-index samples; ``cross_window`` multiplies
    every (i in poi_b, j in poi_c) pair. ``check_halves=False`` lifts the
    first-half / second-half restriction on the POI sets.
    """
    t_b = np.asarray(t_b, dtype=np.float64)
    t_c = np.asarray(t_c, dtype=np.float64)
    feat = second_order_rows(t_b[None], t_c[None], means_b, means_c, mode, poi_b, poi_c, check_halves)
    if mode == "elementwise":
        return SecondOrderFeature(feat[0], mode, (len(t_b),))
    return SecondOrderFeature(feat[0], mode, (len(poi_b), len(poi_c)))


def second_order_rows(
    tb: np.ndarray,
    tc: np.ndarray,
    means_b: np.ndarray,
    means_c: np.ndarray,
    mode: str = "cross_window",
    poi_b: Sequence[int] = (),
    poi_c: Sequence[int] = (),
    check_halves: bool = True,
) -> np.ndarray:
    """Batched :func:`second_order_product`: one feature row per trace pair."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    tb = np.atleast_2d(np.asarray(tb, dtype=np.float64))
    tc = np.atleast_2d(np.asarray(tc, dtype=np.float64))
    mb = np.asarray(means_b, dtype=np.float64)
    mc = np.asarray(means_c, dtype=np.float64)
    if tb.shape != tc.shape:
        raise LengthMismatchError("trace streams differ in shape")
    n = tb.shape[1]
    if mb.shape != (n,) or mc.shape != (n,):
        raise LengthMismatchError("means must have one entry per sample")
    if mode == "elementwise":
        return (tb - mb) * (tc - mc)
    if check_halves:
        pb, pc = _check_pois(poi_b, poi_c, n)
    else:
        pb, pc = np.asarray(poi_b, dtype=np.intp), np.asarray(poi_c, dtype=np.intp)
        if pb.size == 0 or pc.size == 0:
            raise EmptyPOIError("cross_window mode needs non-empty POI sets")
    cb = tb[:, pb] - mb[pb]
    cc = tc[:, pc] - mc[pc]
    return (cb[:, :, None] * cc[:, None, :]).reshape(len(tb), -1)


def second_order_rows_trace_mean(tb: np.ndarray, tc: np.ndarray, poi_b=(), poi_c=(), mode: str = "cross_window") -> np.ndarray:
    """Variant centering each trace by its own mean instead of per-sample means."""
    tb = np.atleast_2d(np.asarray(tb, dtype=np.float64))
    tc = np.atleast_2d(np.asarray(tc, dtype=np.float64))
    cb = tb - tb.mean(axis=1, keepdims=True)
    cc = tc - tc.mean(axis=1, keepdims=True)
    zeros = np.zeros(tb.shape[1])
    return second_order_rows(cb, cc, zeros, zeros, mode, poi_b, poi_c, check_halves=False)


def snr_weighted(x: np.ndarray, snr: np.ndarray) -> np.ndarray:
    """Scale each sample by its SNR (a receiver specialised to one leakage window)."""
    x = np.asarray(x, dtype=np.float64)
    snr = np.asarray(snr, dtype=np.float64)
    if snr.shape != (x.shape[-1],):
        raise LengthMismatchError("SNR profile length must equal sample_count")
    return x * np.where(np.isfinite(snr), snr, 0.0)
