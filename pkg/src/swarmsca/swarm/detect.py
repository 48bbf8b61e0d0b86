"""Spectral target detection with probe consensus."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal as sps

from ..errors import NoConsensusError, SegmentTooLongError

ALTITUDE_STEP_M = 0.05


@dataclass(frozen=True)
class DetectionResult:
    f_star: float
    psd_peak: float
    consensus: bool
    x_hat_tgt: np.ndarray | None = None
    probe_f: tuple[float, ...] = ()
    retries: tuple[int, ...] = ()
    bin_width: float = 0.0
    log: tuple[dict, ...] = field(default=())

    @property
    def total_retries(self) -> int:
        return int(sum(self.retries))


def welch_psd(x: np.ndarray, sample_rate: float, segment: int = 256, overlap: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Welch PSD (Hann window, density scaling, no detrending).

    The integral of the returned density over frequency equals the signal
    power, so white noise of variance s^2 integrates to about s^2.
    """
    x = np.asarray(x, dtype=np.float64)
    if segment > len(x):
        raise SegmentTooLongError(f"segment {segment} longer than signal ({len(x)} samples)")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    return sps.welch(
        x,
        fs=sample_rate,
        window="hann",
        nperseg=segment,
        noverlap=int(overlap * segment),
        detrend=False,
        scaling="density",
        return_onesided=True,
    )


SignalSource = Callable[[float], np.ndarray]


def detect_target(
    probes: Sequence[np.ndarray | SignalSource],
    gamma: float,
    max_retries: int = 3,
    sample_rate: float = 25e6,
    segment: int = 1024,
    overlap: float = 0.5,
    altitude_step: float = ALTITUDE_STEP_M,
    localize: Callable[[], np.ndarray] | None = None,
) -> DetectionResult:
    """Find the emission frequency seen by every probe.

    Each probe is either a fixed signal or a callable taking the accumulated
    altitude offset in meters and returning a signal. A probe whose PSD peak
    is below ``gamma`` climbs ``altitude_step`` and re-queries, up to
    ``max_retries`` times. Consensus requires every probe's peak frequency to
    lie within one PSD bin of the others. ``localize``, when given, supplies
    the target position once consensus is reached.
    """
    if len(probes) != 3:
        raise ValueError("detection uses exactly three probes")
    f_peaks, p_peaks, retries, log = [], [], [], []
    df = 0.0
    for i, src in enumerate(probes):
        offset, tries = 0.0, 0
        while True:
            x = src(offset) if callable(src) else src
            f, pxx = welch_psd(x, sample_rate, segment, overlap)
            df = f[1] - f[0]
            j = int(np.argmax(pxx))
            log.append({"probe": i, "altitude_offset": offset, "f": float(f[j]), "psd": float(pxx[j])})
            if pxx[j] >= gamma:
                break
            if tries >= max_retries:
                raise NoConsensusError(f"probe {i}: PSD peak below threshold after {tries} retries")
            tries += 1
            offset += altitude_step
        f_peaks.append(float(f[j]))
        p_peaks.append(float(pxx[j]))
        retries.append(tries)
    spread = max(f_peaks) - min(f_peaks)
    if spread > df * (1 + 1e-9):
        raise NoConsensusError(f"probe peaks disagree: {f_peaks}")
    f_star = float(np.median(f_peaks))
    x_hat = None if localize is None else np.asarray(localize(), dtype=np.float64)
    return DetectionResult(
        f_star=f_star,
        psd_peak=float(min(p_peaks)),
        consensus=True,
        x_hat_tgt=x_hat,
        probe_f=tuple(f_peaks),
        retries=tuple(retries),
        bin_width=float(df),
        log=tuple(log),
    )
