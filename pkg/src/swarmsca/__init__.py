"""Standoff multi-receiver EM side-channel simulator and analysis library."""

from .types import (
    AES,
    AES_SBOX,
    HW_TABLE,
    RankTrajectory,
    SBoxTable,
    StandoffConfig,
    Trace,
    TraceSet,
    hamming_weight,
    key_rank,
    sbox_lookup,
)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "AES",
    "AES_SBOX",
    "HW_TABLE",
    "KERNEL_BACKEND",
    "RankTrajectory",
    "SBoxTable",
    "StandoffConfig",
    "Trace",
    "TraceSet",
    "hamming_weight",
    "key_rank",
    "sbox_lookup",
]
