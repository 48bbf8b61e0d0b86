"""Placement of the two probes by an SNR-proportional information score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..types import StandoffConfig


@dataclass(frozen=True)
class RepositionPlan:
    """Candidate set and movement constraints for one repositioning cycle."""

    candidates: np.ndarray
    max_displacement: float = 0.5
    min_separation: float = 0.1
    period: float = 0.2
    snr_ref: float = StandoffConfig().snr_ref_linear
    d_ref: float = 0.25

    def __post_init__(self):
        c = np.asarray(self.candidates, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError("candidates must be an (n, 3) array")
        object.__setattr__(self, "candidates", c)


@dataclass(frozen=True)
class RepositionDecision:
    w_b: np.ndarray
    w_c: np.ndarray
    fisher_current: float
    fisher_best: float
    index: tuple[int, int] | None

    @property
    def moved(self) -> bool:
        return self.index is not None


def hemisphere_candidates(x_tgt, n_azimuth: int = 12, n_elevation: int = 4, radii=(0.25, 0.5, 0.75)) -> np.ndarray:
    """Grid over the upper hemisphere centered on the target, radius-major order."""
    x_tgt = np.asarray(x_tgt, dtype=np.float64)
    pts = []
    for rad in radii:
        for ie in range(n_elevation):
            el = 0.5 * math.pi * (ie + 0.5) / n_elevation
            for ia in range(n_azimuth):
                az = 2.0 * math.pi * ia / n_azimuth
                pts.append(x_tgt + rad * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]))
    return np.array(pts)


def fisher_proxy(p, x_tgt, snr_ref: float, d_ref: float) -> np.ndarray:
    """SNR at pose(s) ``p`` under inverse-square path loss."""
    d = np.linalg.norm(np.atleast_2d(p) - np.asarray(x_tgt, dtype=np.float64), axis=1)
    with np.errstate(divide="ignore"):
        return snr_ref * (d_ref / d) ** 2


def evaluate_reposition(x_tgt, poses, plan: RepositionPlan) -> RepositionDecision:
    """Exhaustive search over ordered candidate pairs (B, C).

    ``poses`` is (A, B, C); A stays put. A pair is feasible when each probe
    moves at most ``max_displacement`` and A, B, C are pairwise at least
    ``min_separation`` apart. The first pair (lexicographic in candidate
    index) with the largest total score is chosen if it strictly beats the
    current placement; otherwise the current poses are kept.
    """
    a, b, c = (np.asarray(p, dtype=np.float64) for p in poses)
    cand = plan.candidates
    info = fisher_proxy(cand, x_tgt, plan.snr_ref, plan.d_ref)
    f_a = fisher_proxy(a, x_tgt, plan.snr_ref, plan.d_ref)[0]
    current = float(f_a + fisher_proxy(np.vstack([b, c]), x_tgt, plan.snr_ref, plan.d_ref).sum())
    if len(cand) == 0:
        return RepositionDecision(b, c, current, current, None)
    ok_b = np.linalg.norm(cand - b, axis=1) <= plan.max_displacement
    ok_c = np.linalg.norm(cand - c, axis=1) <= plan.max_displacement
    far_a = np.linalg.norm(cand - a, axis=1) >= plan.min_separation
    sep = np.linalg.norm(cand[:, None, :] - cand[None, :, :], axis=2) >= plan.min_separation
    feasible = (ok_b & far_a)[:, None] & (ok_c & far_a)[None, :] & sep
    total = np.where(feasible, f_a + info[:, None] + info[None, :], -np.inf)
    flat = int(np.argmax(total))  # first maximum in row-major order
    best = float(total.flat[flat])
    if not best > current:
        return RepositionDecision(b, c, current, current, None)
    i, j = divmod(flat, len(cand))
    return RepositionDecision(cand[i].copy(), cand[j].copy(), current, best, (i, j))


def reposition(x_tgt, poses, plan: RepositionPlan) -> tuple[np.ndarray, np.ndarray]:
    """Waypoints (w_b, w_c) for the two probes."""
    d = evaluate_reposition(x_tgt, poses, plan)
    return d.w_b, d.w_c
