"""Free-space standoff model: received power, SNR vs distance and receiver count, AWGN injection."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveError
from .types import StandoffConfig, TraceSet

TABLE3_DISTANCES = (0.25, 0.50, 0.75, 1.00, 1.50)


@dataclass(frozen=True)
class NoisePlan:
    distance_m: float
    drone_count: int
    snr_linear: float
    sigma_add: float

    def __post_init__(self):
        if self.sigma_add < 0:
            raise ValueError("sigma_add must be >= 0")
        if not self.snr_linear > 0:
            raise ValueError("snr_linear must be > 0")


def _check(d: float, n: int = 1) -> None:
    if not d > 0:
        raise NonPositiveError(f"distance must be positive, got {d}")
    if n < 1:
        raise NonPositiveError(f"receiver count must be >= 1, got {n}")


def received_power_ratio(d: float, cfg: StandoffConfig) -> float:
    """Geometric factor (d_ref/d)^2; transmit power and LNA gain fold into the reference SNR."""
    _check(d)
    return (cfg.d_ref_m / d) ** 2


def standoff_snr(d: float, n: int, cfg: StandoffConfig) -> tuple[float, float]:
    """(linear SNR on the calibration anchor, SNR in dB on the reporting anchor)."""
    _check(d, n)
    g = received_power_ratio(d, cfg) * n
    return cfg.snr_ref_linear * g, cfg.snr_ref_db + 10.0 * math.log10(g)


def additive_variance(d: float, n: int, cfg: StandoffConfig) -> float:
    snr, _ = standoff_snr(d, n, cfg)
    return max(0.0, cfg.sigma_s_sq / snr - cfg.sigma_n_sq)


def additive_sigma(d: float, n: int, cfg: StandoffConfig) -> float:
    """Std of the extra AWGN that brings a reference-distance trace down to SNR(d, n)."""
    return math.sqrt(additive_variance(d, n, cfg))


def noise_plan(d: float, n: int, cfg: StandoffConfig) -> NoisePlan:
    snr, _ = standoff_snr(d, n, cfg)
    return NoisePlan(distance_m=d, drone_count=n, snr_linear=snr, sigma_add=additive_sigma(d, n, cfg))


def per_receiver_sigma(d: float, n: int, cfg: StandoffConfig) -> float:
    """Per-receiver noise std such that an equal-weight average of ``n`` receivers
    carries exactly ``additive_sigma(d, n)`` of added noise."""
    return math.sqrt(n) * additive_sigma(d, n, cfg)


def inject_noise(ts: TraceSet, plan: NoisePlan | float, seed: int) -> TraceSet:
    """Add i.i.d. Gaussian noise of std ``plan.sigma_add`` to every sample.

    Each trace draws from its own child stream of ``seed``, so the result does
    not depend on how traces are batched. ``sigma_add == 0`` returns the input
    samples unchanged.
    """
    sigma = plan.sigma_add if isinstance(plan, NoisePlan) else float(plan)
    if sigma < 0:
        raise ValueError("sigma_add must be >= 0")
    if sigma == 0:
        return ts.with_samples(ts.samples.copy())
    out = np.array(ts.samples, dtype=np.float64)
    children = np.random.SeedSequence(seed).spawn(len(ts))
    for i, child in enumerate(children):
        out[i] += sigma * np.random.default_rng(child).standard_normal(ts.sample_count)
    return ts.with_samples(out.astype(ts.samples.dtype))


def table3_rows(cfg: StandoffConfig | None = None, distances=TABLE3_DISTANCES, counts=(1, 3)):
    cfg = cfg or StandoffConfig()
    rows = []
    for d in distances:
        row = {"distance": d}
        for n in counts:
            row[f"snr{n}_db"] = standoff_snr(d, n, cfg)[1]
        for n in counts:
            row[f"sigma{n}"] = additive_sigma(d, n, cfg)
        rows.append(row)
    return rows


def table3_csv(cfg: StandoffConfig | None = None, path: str | os.PathLike | None = None) -> str:
    """Distance / SNR / added-noise table as CSV text (written to ``path`` when given)."""
    rows = table3_rows(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["distance", "snr1_db", "snr3_db", "sigma1", "sigma3"])
    for r in rows:
        w.writerow([f"{r['distance']:.2f}", f"{r['snr1_db']:.3f}", f"{r['snr3_db']:.3f}", f"{r['sigma1']:.4f}", f"{r['sigma3']:.4f}"])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
