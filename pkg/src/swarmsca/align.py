"""Trace alignment and two-stage receiver clock synchronisation.

Sign conventions:

* ``align_profiling``: the estimated shift is the lag at which the reference
  best matches the trace (trace ~= roll(reference, shift)); the correction
  rolls the trace by ``-shift``.
* ``fine_pilot_sync``: ``tau_hat`` is the delay of a buffer relative to the
  anchor (buffer[n] ~= anchor[n - tau_hat * fs]); the correction is
  ``fractional_shift(buffer, -tau_hat)``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateReferenceError, ExcessiveShiftError, PilotAbsentError
from .types import TraceSet

DEFAULT_SAMPLE_RATE = 25e6
DEFAULT_EPSILON = 10e-9
SINC_TAPS = 64


@dataclass(frozen=True)
class AlignmentResult:
    shifts: np.ndarray
    s_max: int
    reference: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.shifts) > self.s_max):
            raise ValueError("shift exceeds s_max")

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trace", "shift"])
            for i, s in enumerate(self.shifts):
                w.writerow([i, int(s)])


@dataclass(frozen=True)
class SyncEstimate:
    tau_hat: float
    coarse_shift: int
    flagged: bool
    epsilon: float = DEFAULT_EPSILON
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.flagged != (abs(self.tau_hat) >= 10 * self.epsilon):
            raise ValueError("flagged must equal |tau_hat| >= 10 * epsilon")


def circular_xcorr_lags(reference: np.ndarray, traces: np.ndarray, s_max: int, chunk: int = 4096) -> np.ndarray:
    """Best circular lag in [-s_max, s_max] of every row of ``traces`` against ``reference``.

    Ties go to the most negative lag.
    """
    traces = np.atleast_2d(traces)
    n = traces.shape[1]
    ref = np.asarray(reference, dtype=np.float64)
    ref = ref - ref.mean()
    R = np.conj(np.fft.rfft(ref))
    lags = np.arange(-s_max, s_max + 1)
    idx = lags % n
    out = np.empty(traces.shape[0], dtype=np.int64)
    for start in range(0, traces.shape[0], chunk):
        x = np.asarray(traces[start : start + chunk], dtype=np.float64)
        x = x - x.mean(axis=1, keepdims=True)
        c = np.fft.irfft(np.fft.rfft(x, axis=1) * R[None, :], n=n, axis=1)
        out[start : start + chunk] = lags[np.argmax(c[:, idx], axis=1)]
    return out


def align_profiling(ts: TraceSet, reference: np.ndarray | None = None, s_max: int = 50) -> tuple[TraceSet, AlignmentResult]:
    """Circularly realign every trace onto ``reference`` (default: the set's own mean)."""
    n = ts.sample_count
    if not 0 <= s_max < n / 2:
        raise ValueError("s_max must satisfy 0 <= s_max < sample_count / 2")
    ref = np.asarray(ts.samples.mean(axis=0, dtype=np.float64) if reference is None else reference, dtype=np.float64)
    if ref.shape != (n,):
        raise ValueError("reference length must equal sample_count")
    centered = ref - ref.mean()
    if not np.any(np.abs(centered) > 0):
        raise DegenerateReferenceError("reference trace has no structure to correlate against")
    shifts = circular_xcorr_lags(ref, ts.samples, s_max)
    aligned = np.empty_like(ts.samples)
    for i, s in enumerate(shifts):
        aligned[i] = np.roll(ts.samples[i], -int(s))
    return ts.with_samples(aligned), AlignmentResult(shifts=shifts, s_max=s_max, reference=ref)


def coarse_shift_samples(timestamps: Sequence[float], sample_rate: float = DEFAULT_SAMPLE_RATE) -> list[int]:
    t0 = timestamps[0]
    return [int(round((t - t0) * sample_rate)) for t in timestamps]


def integer_shift(x: np.ndarray, s: int, fill: float = np.nan) -> np.ndarray:
    """y[n] = x[n - s]; vacated samples take ``fill``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.full_like(x, fill)
    if s == 0:
        y[:] = x
    elif s > 0:
        y[s:] = x[:-s] if s < len(x) else y[s:]
    elif -s < len(x):
        y[:s] = x[-s:]
    return y


def coarse_timestamp_shift(
    buffers: Sequence[np.ndarray], timestamps: Sequence[float], sample_rate: float = DEFAULT_SAMPLE_RATE, fill: float = 0.0
) -> list[np.ndarray]:
    """Stage 1: integer-sample shift of each buffer by its timestamp offset from buffer 0."""
    if len(buffers) != len(timestamps):
        raise ValueError("one timestamp per buffer required")
    shifts = coarse_shift_samples(timestamps, sample_rate)
    return [integer_shift(b, s, fill) for b, s in zip(buffers, shifts)]


def _sinc_taper(u: np.ndarray) -> np.ndarray:
    half = SINC_TAPS / 2
    w = 0.5 * (1.0 + np.cos(np.pi * u / half))
    w[np.abs(u) >= half] = 0.0
    return np.sinc(u) * w


def fractional_shift(buffer: np.ndarray, tau: float, sample_rate: float = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Band-limited delay by ``tau`` seconds: y[n] = x(n - tau * fs).

    A 64-tap windowed-sinc kernel reconstructs the fractional part. Output
    samples whose stencil leaves the buffer are NaN. Whole-sample delays are
    exact shifts.
    """
    x = np.asarray(buffer, dtype=np.float64)
    n = len(x)
    d = tau * sample_rate
    if abs(d) >= n / 4:
        raise ExcessiveShiftError(f"shift of {d:.2f} samples exceeds a quarter of the buffer")
    i0 = math.floor(d)
    frac = d - i0
    if abs(frac) < 1e-12 or abs(frac - 1.0) < 1e-12:
        return integer_shift(x, int(round(d)))
    j = np.arange(-SINC_TAPS // 2 + 1, SINC_TAPS // 2 + 1)  # -31 .. 32
    h = _sinc_taper(j - frac)
    y = np.full(n, np.nan)
    lo = i0 + j[-1]  # first n with all taps in range
    hi = n - 1 + i0 + j[0]  # last such n
    if hi < lo:
        return y
    out_idx = np.arange(lo, hi + 1)
    acc = np.zeros(len(out_idx))
    for jj, hj in zip(j, h):
        acc += hj * x[out_idx - i0 - jj]
    y[out_idx] = acc
    return y


def _pilot_phasor(x: np.ndarray, n_idx: np.ndarray, omega: float) -> tuple[complex, float]:
    """Least-squares complex amplitude of the pilot and its share of buffer power."""
    c = np.cos(omega * n_idx)
    s = np.sin(omega * n_idx)
    A = np.column_stack([c, s, np.ones_like(c)])
    coef, *_ = np.linalg.lstsq(A, x, rcond=None)
    a, b = coef[0], coef[1]
    pilot_power = 0.5 * (a * a + b * b)
    total = float(np.var(x))
    share = pilot_power / total if total > 0 else 0.0
    # a cos(wn) + b sin(wn) = Re[(a - i b) e^{iwn}]
    return complex(a, -b), share


def _parabolic_vertex(r_m: float, r_0: float, r_p: float) -> float:
    den = r_m - 2.0 * r_0 + r_p
    if den >= 0:
        return 0.0
    return 0.5 * (r_m - r_p) / den


def fine_pilot_sync(
    buffers: Sequence[np.ndarray],
    pilot_freq: float = 1e3,
    epsilon: float = DEFAULT_EPSILON,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    max_lag: int = 16,
    detection_floor: float = 0.01,
    pilot_slice: slice | None = None,
    coarse_shifts: Sequence[int] | None = None,
) -> list[SyncEstimate]:
    """Stage 2: sub-sample delay of each buffer relative to buffer 0 from the shared pilot.

    The pilot is isolated per buffer as a least-squares phasor at
    ``pilot_freq``; the normalised cross-correlation of the analytic pilots is
    evaluated at integer lags within +/-``max_lag`` (kept inside half a pilot
    period) and the peak is refined with a 3-point parabola. Refinement is
    skipped at the edge of the lag window.
    """
    omega = 2.0 * math.pi * pilot_freq / sample_rate
    half_period = int(math.floor(math.pi / omega))
    K = max(1, min(max_lag, half_period - 1))
    if coarse_shifts is None:
        coarse_shifts = [0] * len(buffers)

    segs = []
    for b in buffers:
        x = np.asarray(b, dtype=np.float64)
        if pilot_slice is not None:
            x = x[pilot_slice]
        segs.append(x)
    length = min(len(s) for s in segs)
    valid = np.ones(length, dtype=bool)
    for s in segs:
        valid &= np.isfinite(s[:length])
    n_idx = np.flatnonzero(valid).astype(np.float64)
    if len(n_idx) < 3:
        raise PilotAbsentError("no valid pilot samples")

    phasors = []
    for i, s in enumerate(segs):
        ph, share = _pilot_phasor(s[:length][valid], n_idx, omega)
        if share < detection_floor or abs(ph) == 0:
            raise PilotAbsentError(f"buffer {i}: pilot power share {share:.2e} below floor {detection_floor:.2e}")
        phasors.append(ph)

    # correlate analytic pilots over a common index range that stays in bounds for every lag
    core = np.arange(K, length - K, dtype=np.float64)
    ref = phasors[0] * np.exp(1j * omega * core)
    ref = ref / np.linalg.norm(ref)
    out = []
    lags = np.arange(-K, K + 1)
    for i, ph in enumerate(phasors):
        if i == 0:
            out.append(SyncEstimate(0.0, int(coarse_shifts[0]), False, epsilon, sample_rate))
            continue
        # R(k) = 1 - |u - v|^2 / 2 for unit vectors; the deficit form keeps full
        # precision near the peak, where a slow pilot leaves R within ~1e-8 of 1
        R = np.empty(len(lags))
        for m, k in enumerate(lags):
            q = ph * np.exp(1j * omega * (core + k))
            d = ref - q / np.linalg.norm(q)
            R[m] = -0.5 * np.real(np.vdot(d, d))
        m0 = int(np.argmax(R))
        delta = 0.0
        if 0 < m0 < len(lags) - 1:
            delta = _parabolic_vertex(R[m0 - 1], R[m0], R[m0 + 1])
        tau = (lags[m0] + delta) / sample_rate
        out.append(SyncEstimate(tau, int(coarse_shifts[i]), abs(tau) >= 10 * epsilon, epsilon, sample_rate))
    return out


def two_stage_sync(
    buffers: Sequence[np.ndarray],
    timestamps: Sequence[float],
    pilot_freq: float = 1e3,
    epsilon: float = DEFAULT_EPSILON,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    **kwargs,
) -> tuple[list[np.ndarray], list[SyncEstimate]]:
    """Coarse timestamp shift, then pilot fine alignment.

    Buffers whose estimate reaches ``epsilon`` are fractionally shifted; flagged
    buffers are still returned and left for the caller to exclude.
    """
    shifts = coarse_shift_samples(timestamps, sample_rate)
    coarse = [integer_shift(b, s) for b, s in zip(buffers, shifts)]
    est = fine_pilot_sync(coarse, pilot_freq, epsilon, sample_rate, coarse_shifts=shifts, **kwargs)
    aligned = []
    for b, e in zip(coarse, est):
        if abs(e.tau_hat) >= epsilon:
            b = fractional_shift(np.nan_to_num(b, nan=0.0), -e.tau_hat, sample_rate)
        aligned.append(b)
    return aligned, est
