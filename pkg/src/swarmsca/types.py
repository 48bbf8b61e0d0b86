"""Domain types shared across the package.

Traces are stored column-wise inside a :class:`TraceSet` (one 2-D sample
matrix plus metadata arrays); :class:`Trace` is the per-row view.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

# fmt: off
AES_SBOX = np.array([
    0x63, 0x7C, 0x77, 0x7B, 0xF2, 0x6B, 0x6F, 0xC5, 0x30, 0x01, 0x67, 0x2B, 0xFE, 0xD7, 0xAB, 0x76,
    0xCA, 0x82, 0xC9, 0x7D, 0xFA, 0x59, 0x47, 0xF0, 0xAD, 0xD4, 0xA2, 0xAF, 0x9C, 0xA4, 0x72, 0xC0,
    0xB7, 0xFD, 0x93, 0x26, 0x36, 0x3F, 0xF7, 0xCC, 0x34, 0xA5, 0xE5, 0xF1, 0x71, 0xD8, 0x31, 0x15,
    0x04, 0xC7, 0x23, 0xC3, 0x18, 0x96, 0x05, 0x9A, 0x07, 0x12, 0x80, 0xE2, 0xEB, 0x27, 0xB2, 0x75,
    0x09, 0x83, 0x2C, 0x1A, 0x1B, 0x6E, 0x5A, 0xA0, 0x52, 0x3B, 0xD6, 0xB3, 0x29, 0xE3, 0x2F, 0x84,
    0x53, 0xD1, 0x00, 0xED, 0x20, 0xFC, 0xB1, 0x5B, 0x6A, 0xCB, 0xBE, 0x39, 0x4A, 0x4C, 0x58, 0xCF,
    0xD0, 0xEF, 0xAA, 0xFB, 0x43, 0x4D, 0x33, 0x85, 0x45, 0xF9, 0x02, 0x7F, 0x50, 0x3C, 0x9F, 0xA8,
    0x51, 0xA3, 0x40, 0x8F, 0x92, 0x9D, 0x38, 0xF5, 0xBC, 0xB6, 0xDA, 0x21, 0x10, 0xFF, 0xF3, 0xD2,
    0xCD, 0x0C, 0x13, 0xEC, 0x5F, 0x97, 0x44, 0x17, 0xC4, 0xA7, 0x7E, 0x3D, 0x64, 0x5D, 0x19, 0x73,
    0x60, 0x81, 0x4F, 0xDC, 0x22, 0x2A, 0x90, 0x88, 0x46, 0xEE, 0xB8, 0x14, 0xDE, 0x5E, 0x0B, 0xDB,
    0xE0, 0x32, 0x3A, 0x0A, 0x49, 0x06, 0x24, 0x5C, 0xC2, 0xD3, 0xAC, 0x62, 0x91, 0x95, 0xE4, 0x79,
    0xE7, 0xC8, 0x37, 0x6D, 0x8D, 0xD5, 0x4E, 0xA9, 0x6C, 0x56, 0xF4, 0xEA, 0x65, 0x7A, 0xAE, 0x08,
    0xBA, 0x78, 0x25, 0x2E, 0x1C, 0xA6, 0xB4, 0xC6, 0xE8, 0xDD, 0x74, 0x1F, 0x4B, 0xBD, 0x8B, 0x8A,
    0x70, 0x3E, 0xB5, 0x66, 0x48, 0x03, 0xF6, 0x0E, 0x61, 0x35, 0x57, 0xB9, 0x86, 0xC1, 0x1D, 0x9E,
    0xE1, 0xF8, 0x98, 0x11, 0x69, 0xD9, 0x8E, 0x94, 0x9B, 0x1E, 0x87, 0xE9, 0xCE, 0x55, 0x28, 0xDF,
    0x8C, 0xA1, 0x89, 0x0D, 0xBF, 0xE6, 0x42, 0x68, 0x41, 0x99, 0x2D, 0x0F, 0xB0, 0x54, 0xBB, 0x16,
], dtype=np.uint8)
# fmt: on

HW_TABLE = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def hamming_weight(b: int) -> int:
    """Number of set bits in a byte."""
    return int(HW_TABLE[int(b) & 0xFF])


@dataclass(frozen=True)
class SBoxTable:
    table: np.ndarray = field(default_factory=lambda: AES_SBOX.copy())

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.uint8)
        if t.shape != (256,):
            raise ValueError("S-box table must have 256 entries")
        if len(np.unique(t)) != 256:
            raise ValueError("S-box table is not a permutation of 0..255")
        object.__setattr__(self, "table", _frozen(t))

    def inverse(self) -> np.ndarray:
        inv = np.empty(256, dtype=np.uint8)
        inv[self.table] = np.arange(256, dtype=np.uint8)
        return inv

    def __getitem__(self, x):
        return self.table[x]


AES = SBoxTable()


def sbox_lookup(s: SBoxTable, x: int) -> int:
    return int(s.table[int(x) & 0xFF])


def key_rank(scores: Sequence[float] | np.ndarray, k_true: int) -> int:
    """Count of key hypotheses scoring strictly above the true key.

    Ties resolve in favour of the true key.
    """
    L = np.asarray(scores)
    if L.shape != (256,):
        raise ValueError(f"expected 256 scores, got shape {L.shape}")
    return int(np.count_nonzero(L > L[k_true]))


@dataclass(frozen=True)
class Trace:
    samples: np.ndarray
    plaintext: np.ndarray
    key: np.ndarray
    masks: np.ndarray
    label: int


@dataclass(frozen=True)
class TraceSet:
    """A profiling or attack corpus.

    ``labels`` follow ``label_convention``: ``"masked"`` means the stored label
    is the masked intermediate S[p ^ k] ^ r, with r = ``masks[:, mask_index]``.
    Unmasking is always explicit, see :meth:`unmasked_labels`.
    """

    samples: np.ndarray  # (n, sample_count)
    plaintext: np.ndarray  # (n, 16) uint8
    key: np.ndarray  # (n, 16) uint8
    masks: np.ndarray  # (n, m>=1) uint8
    labels: np.ndarray  # (n,) uint8
    role: str = "profiling"
    target_byte_index: int = 3
    mask_index: int = 0
    label_convention: str = "masked"
    desync: np.ndarray | None = None  # applied circular shifts, when known

    def __post_init__(self):
        if self.role not in ("profiling", "attack"):
            raise ValueError(f"role must be 'profiling' or 'attack', got {self.role!r}")
        if self.label_convention not in ("masked", "unmasked"):
            raise ValueError(f"unknown label convention {self.label_convention!r}")
        samples = np.asarray(self.samples)
        if samples.ndim != 2 or samples.shape[0] == 0 or samples.shape[1] == 0:
            raise ValueError("samples must be a non-empty (n_traces, sample_count) matrix")
        n = samples.shape[0]
        if not 0 <= self.target_byte_index <= 15:
            raise ValueError("target_byte_index must be in [0, 15]")
        meta = {}
        for name in ("plaintext", "key", "masks"):
            a = np.asarray(getattr(self, name))
            if a.ndim == 1:
                a = a[:, None]
            if a.shape[0] != n:
                raise ValueError(f"{name} has {a.shape[0]} rows, expected {n}")
            if a.size and (a.min() < 0 or a.max() > 255):
                raise ValueError(f"{name} bytes out of range")
            meta[name] = _frozen(a.astype(np.uint8))
        if meta["plaintext"].shape[1] <= self.target_byte_index:
            raise ValueError("plaintext too short for target byte")
        if meta["masks"].shape[1] < 1 or meta["masks"].shape[1] <= self.mask_index:
            raise ValueError("masks must hold at least one byte per trace")
        labels = np.asarray(self.labels)
        if labels.shape != (n,):
            raise ValueError("labels must have one entry per trace")
        if labels.size and (labels.min() < 0 or labels.max() > 255):
            raise ValueError("labels out of byte range")
        object.__setattr__(self, "samples", _frozen(samples))
        for name, a in meta.items():
            object.__setattr__(self, name, a)
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8)))
        if self.desync is not None:
            object.__setattr__(self, "desync", _frozen(np.asarray(self.desync, dtype=np.int64)))

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, i: int) -> Trace:
        return Trace(
            samples=self.samples[i],
            plaintext=self.plaintext[i],
            key=self.key[i],
            masks=self.masks[i],
            label=int(self.labels[i]),
        )

    def __iter__(self) -> Iterator[Trace]:
        for i in range(len(self)):
            yield self[i]

    @property
    def sample_count(self) -> int:
        return self.samples.shape[1]

    @property
    def target_plaintext(self) -> np.ndarray:
        return self.plaintext[:, self.target_byte_index]

    @property
    def target_key(self) -> np.ndarray:
        return self.key[:, self.target_byte_index]

    @property
    def target_mask(self) -> np.ndarray:
        return self.masks[:, self.mask_index]

    def unmasked_labels(self) -> np.ndarray:
        if self.label_convention == "unmasked":
            return self.labels
        return self.labels ^ self.target_mask

    def masked_labels(self) -> np.ndarray:
        if self.label_convention == "masked":
            return self.labels
        return self.labels ^ self.target_mask

    def with_samples(self, samples: np.ndarray, **changes) -> "TraceSet":
        """Same metadata, new sample matrix (row count must match)."""
        samples = np.asarray(samples)
        if samples.shape[0] != len(self):
            raise ValueError("row count mismatch")
        return replace(self, samples=samples, **changes)

    def subset(self, idx) -> "TraceSet":
        return replace(
            self,
            samples=self.samples[idx],
            plaintext=self.plaintext[idx],
            key=self.key[idx],
            masks=self.masks[idx],
            labels=self.labels[idx],
            desync=None if self.desync is None else self.desync[idx],
        )


@dataclass(frozen=True)
class StandoffConfig:
    """Standoff geometry and calibration constants.

    Two SNR anchors are kept: ``snr_ref_linear`` (sigma_s_sq / sigma_n_sq) drives
    noise injection, ``snr_ref_db`` is used for reporting only.
    """

    distance_m: float = 0.25
    drone_count: int = 1
    d_ref_m: float = 0.25
    sigma_s_sq: float = 0.080
    sigma_n_sq: float = 6.24
    snr_ref_db: float = -22.9
    poi_threshold: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.drone_count < 1:
            raise ValueError("drone_count must be >= 1")
        if self.sigma_s_sq <= 0 or self.sigma_n_sq <= 0:
            raise ValueError("calibration variances must be positive")
        if self.d_ref_m <= 0:
            raise ValueError("d_ref_m must be positive")

    @property
    def snr_ref_linear(self) -> float:
        return self.sigma_s_sq / self.sigma_n_sq


@dataclass(frozen=True)
class RankTrajectory:
    checkpoints: tuple[tuple[int, int], ...]

    def __post_init__(self):
        cps = tuple((int(n), int(r)) for n, r in self.checkpoints)
        counts = [n for n, _ in cps]
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("trace counts must be strictly increasing")
        if any(not 0 <= r <= 255 for _, r in cps):
            raise ValueError("ranks must lie in [0, 255]")
        object.__setattr__(self, "checkpoints", cps)

    @property
    def final_rank(self) -> int:
        return self.checkpoints[-1][1]

    @property
    def trace_counts(self) -> list[int]:
        return [n for n, _ in self.checkpoints]

    @property
    def ranks(self) -> list[int]:
        return [r for _, r in self.checkpoints]

    def first_success(self) -> int | None:
        """Smallest checkpoint trace count from which rank stays 0."""
        hit = None
        for n, r in self.checkpoints:
            if r == 0:
                hit = n if hit is None else hit
            else:
                hit = None
        return hit
