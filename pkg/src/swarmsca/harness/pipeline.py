"""One attack run: per-drone noisy streams, fusion, and key-rank accumulation.

Drone roles: A collects and profiles over the full window; B selects points
of interest on the mask window (first half); C on the cipher window (second
half). D collects nothing; with four drones it fuses A, B and C and adds the
second-order B x C term. Drone counts 1, 2 and 3 map to collectors {A},
{A, B} and {A, B, C} with first-order scoring of the fused stream only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..align import align_profiling
from ..attack import AccumulatorConfig, TemplateSet, accumulate_drone_d, build_templates, load_cnn_logprobs, stream_preprocess
from ..combine import coherent_combine, mrc_weights, second_order_rows
from ..noise import inject_noise, per_receiver_sigma, standoff_snr
from ..types import RankTrajectory, StandoffConfig, TraceSet
from .config import ExperimentConfig

DRONE_IDS = ("A", "B", "C")


def collectors(drone_count: int) -> tuple[str, ...]:
    if drone_count not in (1, 2, 3, 4):
        raise ValueError("drone_count must be 1..4")
    return DRONE_IDS[: min(drone_count, 3)]


@dataclass(frozen=True)
class Profile:
    """Everything learned from profiling traces, per drone role."""

    m1: TemplateSet
    poi_b: np.ndarray
    poi_c: np.ndarray
    means_b: np.ndarray
    means_c: np.ndarray
    m2: TemplateSet
    x_so_mode: str
    reference: np.ndarray | None = None


def build_profile(
    prof_a: TraceSet,
    prof_b: TraceSet | None = None,
    prof_c: TraceSet | None = None,
    cfg: ExperimentConfig | None = None,
    reference: np.ndarray | None = None,
) -> Profile:
    """Templates for every drone role.

    ``prof_b`` and ``prof_c`` default to ``prof_a``. When ``reference`` is
    given, every profiling set is first aligned onto it (window ``cfg.s_max``).
    Second-order profiling pairs B and C traces by index.
    """
    cfg = cfg or ExperimentConfig()
    prof_b = prof_a if prof_b is None else prof_b
    prof_c = prof_a if prof_c is None else prof_c
    if reference is not None:
        cache = {}
        out = []
        for ts in (prof_a, prof_b, prof_c):
            if id(ts) not in cache:
                cache[id(ts)] = align_profiling(ts, reference, cfg.s_max)[0]
            out.append(cache[id(ts)])
        prof_a, prof_b, prof_c = out
    m1 = build_templates(prof_a, cfg.n_poi, "full", cfg.first_order_labels)
    with warnings.catch_warnings():
        # only the POIs of the mask-keyed set are used; empty mask classes are expected on unmasked data
        warnings.simplefilter("ignore", RuntimeWarning)
        poi_b = build_templates(prof_b, cfg.n_poi_so, "first_half", "mask").poi
    poi_c = build_templates(prof_c, cfg.n_poi_so, "second_half", "masked").poi
    means_b = prof_b.samples.mean(axis=0, dtype=np.float64)
    means_c = prof_c.samples.mean(axis=0, dtype=np.float64)
    n = min(len(prof_b), len(prof_c))
    pb, pc = (prof_b, prof_c) if n == len(prof_b) == len(prof_c) else (prof_b.subset(slice(0, n)), prof_c.subset(slice(0, n)))
    x_prof = second_order_rows(pb.samples, pc.samples, means_b, means_c, cfg.x_so_mode, poi_b, poi_c)
    m2 = build_templates(pb, cfg.n_poi, order="second", so_features=x_prof)
    return Profile(m1, poi_b, poi_c, means_b, means_c, m2, cfg.x_so_mode, reference)


def effective_checkpoints(checkpoints, n_attack: int) -> tuple[int, ...]:
    cps = tuple(c for c in checkpoints if c <= n_attack)
    return cps if cps else (n_attack,)


def drone_streams(
    attack: TraceSet, names, distance: float, standoff: StandoffConfig, noise_seed: int
) -> dict[str, np.ndarray]:
    """Independent receiver noise per collector.

    Each of the N collectors adds noise of std sqrt(N) * sigma_add(d, N), so
    the equal-weight average carries exactly sigma_add(d, N) of added noise.
    """
    sigma = per_receiver_sigma(distance, len(names), standoff)
    out = {}
    for idx, name in enumerate(names):
        out[name] = np.asarray(inject_noise(attack, sigma, [int(noise_seed), idx]).samples, dtype=np.float64)
    return out


def run_pipeline(
    profile: Profile,
    attack: TraceSet,
    k_true: int,
    distance: float,
    drone_count: int,
    noise_seed: int,
    cfg: ExperimentConfig,
    standoff: StandoffConfig,
) -> RankTrajectory:
    names = collectors(drone_count)
    streams = drone_streams(attack, names, distance, standoff, noise_seed)
    if profile.reference is not None and cfg.align_attack_phase:
        streams = {k: align_profiling(attack.with_samples(v), profile.reference, cfg.s_max)[0].samples for k, v in streams.items()}
    snr = standoff_snr(distance, 1, standoff)[0]
    weights = mrc_weights([snr] * len(names))
    combined = coherent_combine([stream_preprocess(streams[k]) for k in names], weights)
    cps = effective_checkpoints(cfg.checkpoints, len(attack))
    use_so = drone_count == 4 and cfg.w_so > 0
    so = None
    if use_so:
        so = second_order_rows(streams["B"], streams["C"], profile.means_b, profile.means_c, profile.x_so_mode, profile.poi_b, profile.poi_c)
    cnn = load_cnn_logprobs(cfg.cnn_logprobs) if (cfg.cnn_logprobs and drone_count == 4) else None
    acc = AccumulatorConfig(w_so=cfg.w_so if use_so else 0.0, w_cnn=cfg.w_cnn, checkpoints=cps, cnn_logprobs=cnn)
    return accumulate_drone_d(combined, so, profile.m1, profile.m2, acc, attack, k_true)
