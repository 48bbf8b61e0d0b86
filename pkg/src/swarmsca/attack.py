"""Template profiling attack with cosine scoring and multi-stream key-rank accumulation.

Scoring model: traces are normalised at stream level (one mean and one
standard deviation over the whole sample matrix), restricted to the points of
interest, centered, and dotted with unit-norm class templates. Templates are
class means centered by the mean of the class means, then unit-normalised.
"""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import CheckpointRangeError, ConstantTraceError, EmptyPOIError, LengthMismatchError
from .stats import class_moments, snr_profile
from .types import AES, RankTrajectory, SBoxTable, TraceSet

ORDERS = ("first", "second")
WINDOWS = ("full", "first_half", "second_half")
LABEL_MODES = ("masked", "unmasked", "mask")
CENTER_MODES = ("attack", "profiling")

_MAGIC = b"SWTP"
_VERSION = 1
_HEADER = struct.Struct("<4sBBBBIII")  # magic, version, order, window, label_mode, n_poi, sample_count, snr_len


@dataclass(frozen=True)
class TemplateSet:
    """256 unit-norm (or all-zero, for empty classes) templates over a POI set.

    ``center`` is the mean of the class means at the POIs; features are
    centered before scoring. ``sample_count`` is the width of the source
    representation (trace samples, or second-order feature count).
    """

    order: str
    poi: np.ndarray
    templates: np.ndarray
    snr_profile: np.ndarray
    center: np.ndarray
    sample_count: int
    window: str = "full"
    label_mode: str = "unmasked"
    missing_classes: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}")
        if self.label_mode not in LABEL_MODES:
            raise ValueError(f"label_mode must be one of {LABEL_MODES}")
        poi = np.asarray(self.poi, dtype=np.intp)
        if poi.ndim != 1 or poi.size == 0:
            raise EmptyPOIError("template set needs at least one POI")
        if np.any(np.diff(poi) <= 0):
            raise ValueError("POI indices must be strictly increasing")
        if poi[0] < 0 or poi[-1] >= self.sample_count:
            raise ValueError("POI index out of bounds")
        lo, hi = window_bounds(self.window, self.sample_count)
        if poi[0] < lo or poi[-1] >= hi:
            raise ValueError(f"POIs violate the {self.window} window")
        t = np.asarray(self.templates, dtype=np.float64)
        if t.shape != (256, poi.size):
            raise ValueError(f"templates must have shape (256, {poi.size})")
        norms = np.linalg.norm(t, axis=1)
        if np.any((norms > 0) & ~np.isclose(norms, 1.0, rtol=0, atol=1e-9)):
            raise ValueError("templates must be unit-normalised")
        c = np.asarray(self.center, dtype=np.float64)
        if c.shape != (poi.size,):
            raise ValueError("center must have one entry per POI")
        for name, a in (("poi", poi), ("templates", t), ("center", c), ("snr_profile", np.asarray(self.snr_profile, dtype=np.float64))):
            a = np.ascontiguousarray(a)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "missing_classes", tuple(int(v) for v in self.missing_classes))

    @property
    def n_poi(self) -> int:
        return int(self.poi.size)

    def save(self, path: str | os.PathLike) -> None:
        """Flat little-endian binary layout.

        Header: magic ``SWTP``, u8 version, u8 order, u8 window, u8 label mode,
        u32 n_poi, u32 sample_count, u32 snr length. Body: int32 POI indices,
        float64 256 x n_poi templates (row-major), float64 center, float64 SNR
        profile, then u32 count + u8 list of missing classes.
        """
        snr = np.asarray(self.snr_profile, dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(
                _HEADER.pack(
                    _MAGIC,
                    _VERSION,
                    ORDERS.index(self.order),
                    WINDOWS.index(self.window),
                    LABEL_MODES.index(self.label_mode),
                    self.n_poi,
                    self.sample_count,
                    snr.size,
                )
            )
            fh.write(np.asarray(self.poi, dtype="<i4").tobytes())
            fh.write(np.asarray(self.templates, dtype="<f8").tobytes())
            fh.write(np.asarray(self.center, dtype="<f8").tobytes())
            fh.write(snr.tobytes())
            fh.write(struct.pack("<I", len(self.missing_classes)))
            fh.write(np.asarray(self.missing_classes, dtype=np.uint8).tobytes())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "TemplateSet":
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, version, order, window, mode, n_poi, sample_count, snr_len = _HEADER.unpack_from(raw, 0)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError(f"{path}: not a template file (or unsupported version)")
        off = _HEADER.size

        def take(dtype, count):
            nonlocal off
            a = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
            off += a.nbytes
            return a

        poi = take("<i4", n_poi).astype(np.intp)
        templates = take("<f8", 256 * n_poi).reshape(256, n_poi)
        center = take("<f8", n_poi)
        snr = take("<f8", snr_len)
        (n_missing,) = struct.unpack_from("<I", raw, off)
        off += 4
        missing = take(np.uint8, n_missing)
        return cls(
            order=ORDERS[order],
            poi=poi,
            templates=templates.copy(),
            snr_profile=snr.copy(),
            center=center.copy(),
            sample_count=sample_count,
            window=WINDOWS[window],
            label_mode=LABEL_MODES[mode],
            missing_classes=tuple(missing.tolist()),
        )


@dataclass(frozen=True)
class AccumulatorConfig:
    """Weights of the second-order and external-classifier terms.

    ``auto_cnn_weight`` is a heuristic: it rescales ``w_cnn`` by the ratio of
    the template term's score spread to the classifier term's, so a classifier
    emitting very peaked log-probabilities cannot swamp the template terms.
    """

    w_so: float = 1.0
    w_cnn: float = 0.0
    checkpoints: tuple[int, ...] = ()
    cnn_logprobs: np.ndarray | None = None
    auto_cnn_weight: bool = False

    def __post_init__(self):
        if self.w_so < 0 or self.w_cnn < 0:
            raise ValueError("weights must be non-negative")
        cps = tuple(int(c) for c in self.checkpoints)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        object.__setattr__(self, "checkpoints", cps)
        if self.cnn_logprobs is not None:
            p = np.asarray(self.cnn_logprobs, dtype=np.float64)
            if p.ndim != 2 or p.shape[1] != 256:
                raise ValueError("classifier log-probabilities must have 256 columns")
            object.__setattr__(self, "cnn_logprobs", p)


def window_bounds(window: str, sample_count: int) -> tuple[int, int]:
    """Half-open [lo, hi) sample range of a window; halves split at sample_count/2."""
    half = (sample_count + 1) // 2
    if window == "full":
        return 0, sample_count
    if window == "first_half":
        return 0, half
    if window == "second_half":
        return half, sample_count
    raise ValueError(f"window must be one of {WINDOWS}")


def stream_preprocess(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit standard deviation over the whole matrix (one stream)."""
    x = np.asarray(x, dtype=np.float64)
    sd = x.std()
    if not sd > 0:
        raise ConstantTraceError("constant stream cannot be normalised")
    return (x - x.mean()) / sd


def labels_for(ts: TraceSet, label_mode: str) -> np.ndarray:
    if label_mode == "masked":
        return ts.masked_labels()
    if label_mode == "unmasked":
        return ts.unmasked_labels()
    if label_mode == "mask":
        return ts.target_mask
    raise ValueError(f"label_mode must be one of {LABEL_MODES}")


def select_poi(snr: np.ndarray, n_poi: int, lo: int = 0, hi: int | None = None, tau: float | None = None) -> np.ndarray:
    """Indices of the ``n_poi`` highest-SNR samples in [lo, hi), sorted ascending.

    Ties break towards the lower index, so increasing ``n_poi`` only adds
    indices. With ``tau`` set, samples below the threshold are excluded.
    """
    snr = np.asarray(snr, dtype=np.float64)
    hi = len(snr) if hi is None else hi
    idx = np.arange(lo, hi)
    vals = np.nan_to_num(snr[lo:hi], nan=-np.inf)
    if tau is not None:
        keep = vals >= tau
        idx, vals = idx[keep], vals[keep]
    if idx.size == 0:
        raise EmptyPOIError("no sample passes the POI selection")
    order = np.lexsort((idx, -vals))
    return np.sort(idx[order[:n_poi]])


def _templates_from(x: np.ndarray, labels: np.ndarray, poi: np.ndarray):
    counts, means, _ = class_moments(x[:, poi], labels)
    present = counts > 0
    center = means[present].mean(axis=0)
    missing = tuple(int(v) for v in np.flatnonzero(~present))
    if missing:
        warnings.warn(f"{len(missing)} label class(es) absent from profiling; using the zero template", RuntimeWarning, stacklevel=3)
    t = means - center
    t[~present] = 0.0
    norms = np.linalg.norm(t, axis=1)
    # a class mean equal to the center leaves only rounding residue; keep it at zero
    nz = norms > 1e-9 * max(float(norms.max()), np.finfo(np.float64).tiny)
    t[~nz] = 0.0
    t[nz] /= norms[nz, None]
    return t, center, missing


def build_templates(
    profiling: TraceSet,
    n_poi: int = 20,
    window: str = "full",
    label_mode: str = "unmasked",
    order: str = "first",
    tau: float | None = None,
    so_features: np.ndarray | None = None,
) -> TemplateSet:
    """Profile class templates.

    First order: classes are ``labels_for(profiling, label_mode)`` over the
    stream-normalised traces, POIs are the top ``n_poi`` SNR samples inside
    ``window``. Second order: ``so_features`` (one row per profiling trace) is
    normalised as a stream and keyed by the unmasked S-box output; ``window``
    must be ``full`` and POIs index feature columns.
    """
    if n_poi < 1:
        raise ValueError("n_poi must be >= 1")
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}")
    if len(profiling) == 0:
        raise ValueError("empty profiling set")
    if order == "first":
        x = stream_preprocess(profiling.samples)
        labels = labels_for(profiling, label_mode)
    else:
        if so_features is None:
            raise ValueError("second-order templates need so_features")
        if window != "full":
            raise ValueError("second-order templates use the full feature window")
        x = stream_preprocess(so_features)
        if x.shape[0] != len(profiling):
            raise LengthMismatchError("one feature row per profiling trace required")
        label_mode = "unmasked"
        labels = profiling.unmasked_labels()
    width = x.shape[1]
    snr = snr_profile(x, labels)
    lo, hi = window_bounds(window, width)
    poi = select_poi(snr, n_poi, lo, hi, tau)
    t, center, missing = _templates_from(x, labels, poi)
    return TemplateSet(
        order=order,
        poi=poi,
        templates=t,
        snr_profile=snr,
        center=center,
        sample_count=width,
        window=window,
        label_mode=label_mode,
        missing_classes=missing,
    )


def predict_label(ell: int, p: int, k_true: int, k: int, s: SBoxTable = AES) -> int:
    """Label the trace would carry under key hypothesis ``k``."""
    return int(ell) ^ int(s.table[int(p) ^ int(k_true)]) ^ int(s.table[int(p) ^ int(k)])


def predicted_labels(ell: np.ndarray, p: np.ndarray, k_true: int, s: SBoxTable = AES) -> np.ndarray:
    """Vectorised :func:`predict_label` for every trace and all 256 hypotheses, shape (n, 256)."""
    ell = np.asarray(ell, dtype=np.uint8)
    p = np.asarray(p, dtype=np.uint8)
    t = s.table
    ks = np.arange(256, dtype=np.uint8)
    return ell[:, None] ^ t[p ^ np.uint8(k_true)][:, None] ^ t[p[:, None] ^ ks[None, :]]


def sbox_hypotheses(p: np.ndarray, s: SBoxTable = AES) -> np.ndarray:
    """S[p ^ k] for every trace and hypothesis, shape (n, 256)."""
    p = np.asarray(p, dtype=np.uint8)
    return s.table[p[:, None] ^ np.arange(256, dtype=np.uint8)[None, :]]


def features_for(x: np.ndarray, tpl: TemplateSet, center: str = "attack") -> np.ndarray:
    """Stream-normalised, POI-restricted and centered feature rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != tpl.sample_count:
        raise LengthMismatchError(f"stream width {x.shape[1]} != template source width {tpl.sample_count}")
    f = stream_preprocess(x)[:, tpl.poi]
    if center == "attack":
        return f - f.mean(axis=0)
    if center == "profiling":
        return f - tpl.center
    raise ValueError(f"center must be one of {CENTER_MODES}")


def check_checkpoints(checkpoints: Sequence[int], n: int) -> np.ndarray:
    cps = np.asarray(list(checkpoints), dtype=np.intp)
    if cps.size == 0:
        raise CheckpointRangeError("at least one checkpoint required")
    if cps.min() < 1 or cps.max() > n:
        raise CheckpointRangeError(f"checkpoints must lie in [1, {n}]")
    if np.any(np.diff(cps) <= 0):
        raise CheckpointRangeError("checkpoints must be strictly increasing")
    return cps


def first_order_term(x: np.ndarray, tpl: TemplateSet, ell: np.ndarray, p: np.ndarray, k_true: int, center: str = "attack") -> np.ndarray:
    """Per-trace, per-hypothesis score T[P] . M_{predicted label}, shape (n, 256)."""
    if tpl.label_mode == "mask":
        raise ValueError("mask-keyed templates select POIs only and cannot rank keys")
    scores = kernels.class_scores(features_for(x, tpl, center), tpl.templates)
    pred = predicted_labels(ell, p, k_true)
    return np.take_along_axis(scores, pred.astype(np.intp), axis=1)


def template_attack(
    attack: TraceSet,
    tpl: TemplateSet,
    k_true: int,
    checkpoints: Sequence[int],
    center: str = "attack",
) -> RankTrajectory:
    """Rank of ``k_true`` after accumulating cosine scores over the attack traces."""
    if tpl.order != "first":
        raise ValueError("template_attack scores first-order templates")
    cps = check_checkpoints(checkpoints, len(attack))
    term = first_order_term(attack.samples, tpl, labels_for(attack, tpl.label_mode), attack.target_plaintext, k_true, center)
    _, ranks = kernels.accumulate_ranks(term[None], np.array([1.0]), k_true, cps)
    return RankTrajectory(tuple(zip(cps.tolist(), ranks.tolist())))


def load_cnn_logprobs(path: str | os.PathLike) -> np.ndarray:
    """Classifier log-probabilities from ``.npy`` or comma-separated text, 256 columns."""
    path = os.fspath(path)
    if path.endswith(".npy"):
        p = np.load(path)
    else:
        p = np.loadtxt(path, delimiter=",", ndmin=2)
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 256:
        raise ValueError(f"{path}: expected a (n_traces, 256) matrix, got {p.shape}")
    return p


def _so_matrix(so_features) -> np.ndarray:
    if isinstance(so_features, np.ndarray):
        return np.atleast_2d(so_features)
    return np.vstack([np.asarray(f.values if hasattr(f, "values") else f, dtype=np.float64) for f in so_features])


def accumulate_drone_d(
    combined: np.ndarray,
    so_features,
    m1: TemplateSet,
    m2: TemplateSet | None,
    cfg: AccumulatorConfig,
    attack_meta: TraceSet,
    k_true: int,
    center: str = "attack",
) -> RankTrajectory:
    """Three-term key accumulation over the fused stream.

    L[k] += T[P1] . M1_{predicted label}
          + w_so  * X_SO[P2] . M2_{S[p ^ k]}
          + w_cnn * P_CNN[S[p ^ k]]

    The second term is skipped when ``w_so == 0`` and the third when no
    classifier input is configured, so the degenerate cases reproduce
    :func:`template_attack` exactly.
    """
    combined = np.asarray(combined, dtype=np.float64)
    n = len(attack_meta)
    if combined.shape[0] != n:
        raise LengthMismatchError("combined stream and attack metadata differ in length")
    cps = check_checkpoints(cfg.checkpoints or (n,), n)
    p = attack_meta.target_plaintext
    terms = [first_order_term(combined, m1, labels_for(attack_meta, m1.label_mode), p, k_true, center)]
    weights = [1.0]
    hyp = None
    if cfg.w_so > 0:
        if m2 is None or so_features is None:
            raise ValueError("w_so > 0 needs second-order features and templates")
        so = _so_matrix(so_features)
        if so.shape[0] != n:
            raise LengthMismatchError("second-order stream and attack metadata differ in length")
        hyp = sbox_hypotheses(p)
        s2 = kernels.class_scores(features_for(so, m2, center), m2.templates)
        terms.append(np.take_along_axis(s2, hyp.astype(np.intp), axis=1))
        weights.append(cfg.w_so)
    if cfg.cnn_logprobs is not None and cfg.w_cnn > 0:
        if cfg.cnn_logprobs.shape[0] != n:
            raise LengthMismatchError("classifier stream and attack metadata differ in length")
        hyp = sbox_hypotheses(p) if hyp is None else hyp
        t3 = np.take_along_axis(cfg.cnn_logprobs, hyp.astype(np.intp), axis=1)
        w = cfg.w_cnn
        if cfg.auto_cnn_weight:
            s3 = t3.std()
            w = w * (terms[0].std() / s3 if s3 > 0 else 1.0)
        terms.append(t3)
        weights.append(w)
    _, ranks = kernels.accumulate_ranks(np.stack(terms), np.asarray(weights), k_true, cps)
    return RankTrajectory(tuple(zip(cps.tolist(), ranks.tolist())))
