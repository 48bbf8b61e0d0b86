"""Experiment configuration: INI file loading, validation and dataset resolution.

Dataset names:

* ``synthetic_masked`` / ``synthetic_unmasked`` with optional overrides after a
  colon, e.g. ``synthetic_masked:desync=50,cipher_center=520,n_attack=2000``.
  Keys: any :class:`SyntheticSpec` field, plus the short forms ``desync``,
  ``mask_center``, ``cipher_center`` and ``snr_db`` (recalibrates the noise).
* ``ascad_masked``, ``ascad_desync50``, ``ascad_desync100``: ASCAD HDF5 files
  (``ASCAD.h5``, ``ASCAD_desync50.h5``, ``ASCAD_desync100.h5``) looked up in
  ``ascad_dir`` or the ``ASCAD_DIR`` environment variable.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from functools import lru_cache

from ..dataset import SyntheticSpec, generate_synthetic, load_ascad
from ..errors import ConfigError, DatasetUnavailableError
from ..types import StandoffConfig, TraceSet

EXPERIMENTS = ("ablation", "distance_sweep", "multiseed", "drone_gain", "cross_dataset", "desync_study", "table3", "snapshot")
BASE_DATASETS = ("ascad_masked", "ascad_desync50", "ascad_desync100", "synthetic_masked", "synthetic_unmasked")
ASCAD_FILES = {"ascad_masked": "ASCAD.h5", "ascad_desync50": "ASCAD_desync50.h5", "ascad_desync100": "ASCAD_desync100.h5"}
DEFAULT_CHECKPOINTS = (100, 500, 1000, 2000, 5000, 10000)
XSO_MODES = ("elementwise", "cross_window")
LABEL_MODES = ("masked", "unmasked")
_ALIASES = {"desync": "desync_max", "mask_center": "mask_window_center", "cipher_center": "cipher_window_center"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "ablation"
    dataset: str = "synthetic_masked"
    distances_m: tuple[float, ...] = (0.25,)
    drone_counts: tuple[int, ...] = (1, 2, 3, 4)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    n_poi: int = 20
    n_poi_so: int = 10
    s_max: int = 100
    w_so: float = 1.0
    x_so_mode: str = "cross_window"
    align_attack_phase: bool = False
    output_dir: str = "results"
    checkpoints: tuple[int, ...] = DEFAULT_CHECKPOINTS
    first_order_labels: str = "unmasked"
    reseed_dataset: bool = False
    dataset_seed: int = 0
    drone_datasets: tuple[str, ...] = ()
    ascad_dir: str | None = None
    cnn_logprobs: str | None = None
    w_cnn: float = 0.0
    jobs: int = 1
    n_attack: int = 0  # 0 = use every attack trace

    def __post_init__(self):
        for name in ("distances_m", "drone_counts", "seeds", "checkpoints", "drone_datasets"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        parse_dataset_name(self.dataset)
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.distances_m:
            raise ConfigError("distances must be non-empty")
        if any(not d > 0 for d in self.distances_m):
            raise ConfigError("distances must be positive")
        if not self.drone_counts or any(n not in (1, 2, 3, 4) for n in self.drone_counts):
            raise ConfigError("drone counts must be drawn from 1..4")
        if self.n_poi < 1 or self.n_poi_so < 1:
            raise ConfigError("POI counts must be >= 1")
        if self.s_max < 0:
            raise ConfigError("s_max must be >= 0")
        if self.w_so < 0 or self.w_cnn < 0:
            raise ConfigError("weights must be non-negative")
        if self.x_so_mode not in XSO_MODES:
            raise ConfigError(f"x_so_mode must be one of {XSO_MODES}")
        if self.first_order_labels not in LABEL_MODES:
            raise ConfigError(f"first_order_labels must be one of {LABEL_MODES}")
        cps = self.checkpoints
        if not cps or cps[0] < 1 or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigError("checkpoints must be positive and strictly increasing")
        if self.drone_datasets and len(self.drone_datasets) != 3:
            raise ConfigError("drone_datasets needs exactly three entries (A, B, C)")
        for ds in self.drone_datasets:
            parse_dataset_name(ds)
        if self.n_attack < 0:
            raise ConfigError("n_attack must be >= 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**d)


def parse_dataset_name(name: str) -> tuple[str, dict]:
    base, _, rest = name.partition(":")
    base = base.strip()
    if base not in BASE_DATASETS:
        raise ConfigError(f"unknown dataset {base!r}; expected one of {BASE_DATASETS}")
    overrides = {}
    if rest.strip():
        if not base.startswith("synthetic"):
            raise ConfigError("overrides are only supported for synthetic datasets")
        spec_fields = {f.name: f.type for f in dataclasses.fields(SyntheticSpec)}
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            key = _ALIASES.get(key.strip(), key.strip())
            if not eq or (key not in spec_fields and key != "snr_db"):
                raise ConfigError(f"bad dataset override {item!r}")
            try:
                overrides[key] = float(val) if key in ("snr_db", "leak_amplitude", "noise_sigma") else int(val, 0)
            except ValueError as exc:
                raise ConfigError(f"bad value in dataset override {item!r}") from exc
    return base, overrides


def _split(value: str, conv):
    return tuple(conv(v) for v in value.replace(",", " ").split())


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


_CONVERTERS = {
    "distances_m": lambda v: _split(v, float),
    "drone_counts": lambda v: _split(v, int),
    "seeds": lambda v: _split(v, int),
    "checkpoints": lambda v: _split(v, int),
    # ';' separates names that carry comma-separated overrides
    "drone_datasets": lambda v: tuple(s.strip() for s in v.split(";" if ";" in v else ",") if s.strip()),
    "n_poi": int,
    "n_poi_so": int,
    "s_max": int,
    "dataset_seed": int,
    "jobs": int,
    "n_attack": int,
    "w_so": float,
    "w_cnn": float,
    "align_attack_phase": _bool,
    "reseed_dataset": _bool,
}


def load_config(path: str | os.PathLike, overrides: dict | None = None) -> ExperimentConfig:
    """Read an INI file; keys from every section are merged, later sections win."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    raw: dict = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            key = {"distances": "distances_m", "drones": "drone_counts", "xso_mode": "x_so_mode", "align_attack": "align_attack_phase"}.get(key, key)
            try:
                raw[key] = _CONVERTERS.get(key, str)(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
    raw.update(overrides or {})
    try:
        return ExperimentConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# -- dataset resolution -------------------------------------------------------


def synthetic_spec(name: str, seed: int) -> SyntheticSpec:
    base, ov = parse_dataset_name(name)
    snr_db = ov.pop("snr_db", None)
    kw = dict(masked=(base == "synthetic_masked"), seed=seed)
    kw.update(ov)
    if snr_db is not None:
        return SyntheticSpec.calibrated(snr_db, **kw)
    return SyntheticSpec(**kw)


@lru_cache(maxsize=4)
def _synthetic(spec: SyntheticSpec):
    return generate_synthetic(spec)


@lru_cache(maxsize=4)
def _ascad(path: str):
    return load_ascad(path, "profiling"), load_ascad(path, "attack")


def ascad_path(name: str, ascad_dir: str | None = None) -> str:
    base, _ = parse_dataset_name(name)
    root = ascad_dir or os.environ.get("ASCAD_DIR")
    if not root:
        raise DatasetUnavailableError(f"{name}: set ASCAD_DIR or ascad_dir to the directory holding {ASCAD_FILES[base]}")
    path = os.path.join(root, ASCAD_FILES[base])
    if not os.path.exists(path):
        raise DatasetUnavailableError(f"{name}: {path} not found")
    return path


@dataclass(frozen=True)
class ResolvedDataset:
    name: str
    profiling: TraceSet
    attack: TraceSet
    k_true: int
    standoff: StandoffConfig
    spec: SyntheticSpec | None = None
    reference: object = field(default=None, compare=False)


def resolve_dataset(name: str, seed: int = 0, ascad_dir: str | None = None) -> ResolvedDataset:
    """Load or generate a dataset. Synthetic corpora carry their own SNR calibration."""
    base, _ = parse_dataset_name(name)
    if base.startswith("synthetic"):
        spec = synthetic_spec(name, seed)
        prof, att = _synthetic(spec)
        s2, n2 = spec.calibration()
        return ResolvedDataset(name, prof, att, spec.k_true, StandoffConfig(sigma_s_sq=s2, sigma_n_sq=n2), spec)
    path = ascad_path(name, ascad_dir)
    try:
        prof, att = _ascad(path)
    except (OSError, ValueError) as exc:
        raise DatasetUnavailableError(f"{name}: {exc}") from exc
    return ResolvedDataset(name, prof, att, int(att.target_key[0]), StandoffConfig())


def synchronized_reference(name: str, seed: int = 0, ascad_dir: str | None = None):
    """Mean profiling trace of the desync-free counterpart of ``name`` (alignment reference)."""
    base, ov = parse_dataset_name(name)
    if base.startswith("synthetic"):
        spec = synthetic_spec(name, seed).with_(desync_max=0)
        prof, _ = _synthetic(spec)
    else:
        prof = _ascad(ascad_path("ascad_masked", ascad_dir))[0]
    return prof.samples.mean(axis=0, dtype="float64")
