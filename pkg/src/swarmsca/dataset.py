"""ASCAD-format HDF5 ingest/export and synthetic masked AES trace corpora."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import DegenerateClassesError, InvalidSpecError, LayoutError, ShapeMismatchError
from .stats import snr_profile
from .types import AES_SBOX, HW_TABLE, TraceSet

GROUPS = {"profiling": "Profiling_traces", "attack": "Attack_traces"}

# Variance of the Hamming weight of a uniform byte.
HW_VARIANCE = 2.0

SNR_FLOOR_DB = -200.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the Hamming-weight pulse leakage generator.

    Masked mode deposits ``HW(r)`` at the mask window and ``HW(S[p^k]^r)`` at the
    cipher window; unmasked mode deposits ``HW(S[p^k])`` at the cipher window only.
    """

    n_profiling: int = 20000
    n_attack: int = 10000
    sample_count: int = 700
    k_true: int = 0x4D
    leak_amplitude: float = 1.0
    noise_sigma: float = 0.5377
    masked: bool = True
    mask_window_center: int = 148
    cipher_window_center: int = 476
    pulse_width: int = 24
    desync_max: int = 0
    seed: int = 0
    target_byte_index: int = 3

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        s = self.sample_count
        if self.n_profiling < 1 or self.n_attack < 1:
            raise InvalidSpecError("corpus sizes must be positive")
        if s < 4:
            raise InvalidSpecError("sample_count too small")
        if not 0 <= self.k_true <= 255:
            raise InvalidSpecError("k_true must be a byte")
        if self.noise_sigma < 0 or self.leak_amplitude < 0:
            raise InvalidSpecError("amplitude and noise must be non-negative")
        if not self.mask_window_center < s / 2 <= self.cipher_window_center:
            raise InvalidSpecError("need mask_window_center < sample_count/2 <= cipher_window_center")
        if self.cipher_window_center >= s or self.mask_window_center < 0:
            raise InvalidSpecError("window centers outside the trace")
        if self.pulse_width < 1:
            raise InvalidSpecError("pulse_width must be >= 1")
        if not 0 <= self.desync_max < s / 2:
            raise InvalidSpecError("desync_max must be in [0, sample_count/2)")

    @classmethod
    def calibrated(cls, snr_db: float = 8.4, **kwargs) -> "SyntheticSpec":
        """Spec whose per-sample peak SNR (unmasked-label grouping, unmasked mode) is ``snr_db``."""
        amp = kwargs.get("leak_amplitude", 1.0)
        ratio = 10.0 ** (snr_db / 10.0)
        kwargs["noise_sigma"] = amp * math.sqrt(HW_VARIANCE / ratio)
        return cls(**kwargs)

    def with_(self, **changes) -> "SyntheticSpec":
        return replace(self, **changes)

    def calibration(self) -> tuple[float, float]:
        """(between-class variance, within-class variance) at the leakage peak."""
        return self.leak_amplitude**2 * HW_VARIANCE, self.noise_sigma**2

    def to_dict(self) -> dict:
        return asdict(self)


def raised_cosine_pulse(sample_count: int, center: int, width: int) -> np.ndarray:
    t = np.arange(sample_count, dtype=np.float64) - center
    pulse = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / width))
    pulse[np.abs(t) >= width / 2.0] = 0.0
    if width == 1:
        pulse[center] = 1.0
    return pulse


def _circular_shift_rows(x: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for i, s in enumerate(shifts):
        out[i] = np.roll(x[i], int(s))
    return out


def _draw_corpus(spec: SyntheticSpec, n: int, role: str, meta_rng, noise_rng, desync_rng, key16):
    s = spec.sample_count
    tb = spec.target_byte_index
    plaintext = meta_rng.integers(0, 256, size=(n, 16), dtype=np.uint8)
    masks = meta_rng.integers(0, 256, size=(n, 1), dtype=np.uint8)
    if not spec.masked:
        masks[:] = 0
    key = np.broadcast_to(key16, (n, 16)).copy()
    sbox_out = AES_SBOX[plaintext[:, tb] ^ key[:, tb]]
    labels = sbox_out ^ masks[:, 0]

    cipher_pulse = raised_cosine_pulse(s, spec.cipher_window_center, spec.pulse_width)
    amp = spec.leak_amplitude
    signal = amp * HW_TABLE[labels].astype(np.float64)[:, None] * cipher_pulse[None, :]
    if spec.masked:
        mask_pulse = raised_cosine_pulse(s, spec.mask_window_center, spec.pulse_width)
        signal += amp * HW_TABLE[masks[:, 0]].astype(np.float64)[:, None] * mask_pulse[None, :]

    noise = noise_rng.standard_normal((n, s))
    samples = signal + spec.noise_sigma * noise
    shifts = None
    if spec.desync_max > 0:
        shifts = desync_rng.integers(-spec.desync_max, spec.desync_max + 1, size=n)
        samples = _circular_shift_rows(samples, shifts)
    return TraceSet(
        samples=samples.astype(np.float32),
        plaintext=plaintext,
        key=key,
        masks=masks,
        labels=labels,
        role=role,
        target_byte_index=tb,
        mask_index=0,
        label_convention="masked",
        desync=shifts,
    )


def generate_synthetic(spec: SyntheticSpec) -> tuple[TraceSet, TraceSet]:
    """Profiling and attack corpora, deterministic in ``spec.seed``.

    Metadata, noise and desync shifts come from independent child streams, so
    two specs with the same seed that differ only in window placement or
    desync share plaintexts, masks and noise realisations.
    """
    spec.validate()
    meta_ss, noise_ss, desync_ss = np.random.SeedSequence(spec.seed).spawn(3)
    meta_rng = np.random.default_rng(meta_ss)
    noise_rng = np.random.default_rng(noise_ss)
    desync_rng = np.random.default_rng(desync_ss)
    key16 = meta_rng.integers(0, 256, size=16, dtype=np.uint8)
    key16[spec.target_byte_index] = spec.k_true
    prof = _draw_corpus(spec, spec.n_profiling, "profiling", meta_rng, noise_rng, desync_rng, key16)
    att = _draw_corpus(spec, spec.n_attack, "attack", meta_rng, noise_rng, desync_rng, key16)
    return prof, att


def empirical_snr_db(ts: TraceSet) -> float:
    """Peak per-sample SNR in dB, classes keyed by the unmasked label."""
    labels = ts.unmasked_labels()
    if len(np.unique(labels)) < 2:
        raise DegenerateClassesError("need at least two distinct labels")
    peak = float(np.max(snr_profile(ts.samples, labels)))
    if not peak > 0:
        return SNR_FLOOR_DB
    return max(10.0 * math.log10(peak), SNR_FLOOR_DB)


# -- HDF5 ------------------------------------------------------------------


def _infer_target_byte(plaintext, key, masks, labels):
    """Find (byte index, mask column, convention) consistent with the stored labels."""
    n = min(len(labels), 512)
    p, k, m, y = plaintext[:n], key[:n], masks[:n], labels[:n]
    for tb in range(plaintext.shape[1]):
        s = AES_SBOX[p[:, tb] ^ k[:, tb]]
        if np.array_equal(s, y):
            return tb, 0, "unmasked"
        for mi in range(m.shape[1]):
            if np.array_equal(s ^ m[:, mi], y):
                return tb, mi, "masked"
    return None


def load_ascad(
    path: str | os.PathLike,
    role: str,
    target_byte_index: int | None = None,
    mask_index: int = 0,
    labels_masked: bool | None = None,
) -> TraceSet:
    """Read one role of an ASCAD-layout HDF5 file.

    With ``target_byte_index``/``labels_masked`` left as None they are inferred
    from the stored ``labels`` dataset (real ASCAD stores unmasked labels for
    byte 2); without a labels dataset the masked label is derived from
    metadata using byte 3 and ``mask_index``.
    """
    import h5py

    if role not in GROUPS:
        raise ValueError(f"role must be one of {sorted(GROUPS)}")
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with h5py.File(path, "r") as f:
        missing = [g for g in GROUPS.values() if g not in f]
        if missing:
            raise LayoutError(f"{path}: missing group(s) {missing}")
        g = f[GROUPS[role]]
        if "traces" not in g or "metadata" not in g:
            raise LayoutError(f"{path}:{g.name} needs 'traces' and 'metadata'")
        traces = g["traces"]
        if traces.ndim != 2:
            raise ShapeMismatchError(f"{g.name}/traces is not a rectangular matrix")
        samples = np.asarray(traces[...], dtype=np.float32)
        meta = g["metadata"][...]
        fields = meta.dtype.names or ()
        for name in ("plaintext", "key", "masks"):
            if name not in fields:
                raise LayoutError(f"{g.name}/metadata lacks field {name!r}")
        if len(meta) != samples.shape[0]:
            raise ShapeMismatchError("metadata and trace counts differ")
        plaintext = np.asarray(meta["plaintext"], dtype=np.uint8).reshape(len(meta), -1)
        key = np.asarray(meta["key"], dtype=np.uint8).reshape(len(meta), -1)
        masks = np.asarray(meta["masks"], dtype=np.uint8).reshape(len(meta), -1)
        labels = np.asarray(g["labels"][...], dtype=np.uint8) if "labels" in g else None
        desync = np.asarray(meta["desync"]) if "desync" in fields else None

    if labels is not None and labels.shape[0] != samples.shape[0]:
        raise ShapeMismatchError("labels and trace counts differ")
    convention = "masked"
    if labels is None:
        tb = 3 if target_byte_index is None else target_byte_index
        labels = AES_SBOX[plaintext[:, tb] ^ key[:, tb]] ^ masks[:, mask_index]
        if labels_masked is False:
            labels = labels ^ masks[:, mask_index]
            convention = "unmasked"
    else:
        found = _infer_target_byte(plaintext, key, masks, labels)
        tb = target_byte_index
        if tb is None:
            tb = found[0] if found else 3
        if labels_masked is None:
            if found:
                convention = found[2]
                mask_index = found[1] if found[2] == "masked" else mask_index
        else:
            convention = "masked" if labels_masked else "unmasked"
    return TraceSet(
        samples=samples,
        plaintext=plaintext,
        key=key,
        masks=masks,
        labels=labels,
        role=role,
        target_byte_index=tb,
        mask_index=mask_index,
        label_convention=convention,
        desync=desync if desync is not None and desync.ndim == 1 else None,
    )


def export_ascad(path: str | os.PathLike, profiling: TraceSet, attack: TraceSet) -> None:
    """Write both corpora to the ASCAD group layout (labels stored as held)."""
    import h5py

    with h5py.File(os.fspath(path), "w") as f:
        for ts, gname in ((profiling, GROUPS["profiling"]), (attack, GROUPS["attack"])):
            g = f.create_group(gname)
            g.create_dataset("traces", data=np.asarray(ts.samples, dtype=np.float32))
            g.create_dataset("labels", data=ts.labels)
            m = ts.masks.shape[1]
            dt = np.dtype([("plaintext", np.uint8, (16,)), ("key", np.uint8, (16,)), ("masks", np.uint8, (m,))])
            meta = np.zeros(len(ts), dtype=dt)
            meta["plaintext"] = ts.plaintext
            meta["key"] = ts.key
            meta["masks"] = ts.masks
            g.create_dataset("metadata", data=meta)
