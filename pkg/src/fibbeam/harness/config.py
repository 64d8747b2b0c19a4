"""Experiment configuration, profiles and digests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..antenna import DESIGNS
from ..channel import Scene, load_scene
from ..neural import TrainConfig

SCHEMA_VERSION = 1
SCENARIOS = ("indoor-pose", "sub6")
TRAINING_SIZES = (500, 1000, 2000, 4000, 8000, 19000)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def digest_of(obj) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace)."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "indoor-pose"
    scene_file: str | None = None
    designs: tuple[str, ...] = ("EF",)
    mixtures: tuple[tuple[str, ...], ...] = ()
    n_fib: int = 100
    n_train: int = 4000
    n_test: int = 1000
    n_b: tuple[int, ...] = (1, 2, 3, 5, 10, 20)
    top_n: tuple[int, ...] = (1, 3, 5, 10)
    seeds: tuple[int, ...] = (0, 1, 2)
    master_seed: int = 0
    ap_geometry: tuple[int, int, int] = (1, 8, 1)
    ap_patch: bool = True
    hidden_layers: int = 5
    hidden_width: int = 128
    train: TrainConfig = field(default_factory=TrainConfig)
    tx_power_dbm: float = 24.0
    noise_dbm: float = -84.0
    noisy_labels: bool = True
    frame_duration: float = 20e-3
    sensing_slot: float = 0.1e-3
    # sub-6 scenario only
    sub6_ap_geometry: tuple[int, int, int] = (1, 4, 1)
    sub6_subcarriers: int = 32
    sub6_bandwidth: float = 20e6
    sub6_cp_taps: int = 32
    mmwave_subcarriers: int = 64
    mmwave_bandwidth: float = 0.5e9
    mmwave_cp_taps: int = 64
    ut_design: str = "EF"
    profile: str = "desk"
    out: str = "out"

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        for d in (*self.designs, *(m for mix in self.mixtures for m in mix)):
            if d not in DESIGNS and d not in ("ULA4", "ULA8"):
                raise ConfigError(f"unknown device design {d!r}")
        if min(self.n_fib, self.n_train, self.n_test) < 1:
            raise ConfigError("n_fib and dataset sizes must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(n < 1 for n in (*self.n_b, *self.top_n)):
            raise ConfigError("candidate list sizes must be >= 1")
        if self.scene_file is not None and not Path(self.scene_file).is_file():
            raise ConfigError(f"scene file {self.scene_file} does not exist")

    def scene(self) -> Scene:
        if self.scene_file is not None:
            return load_scene(self.scene_file)
        return default_scene(self.scenario)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "train" in doc and isinstance(doc["train"], dict):
            doc["train"] = TrainConfig(**doc["train"])
        if "mixtures" in doc:
            doc["mixtures"] = tuple(tuple(m) for m in doc["mixtures"])
        for k, v in list(doc.items()):
            if isinstance(v, list):
                doc[k] = tuple(v)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def default_scene(scenario: str) -> Scene:
    if scenario == "sub6":
        # dual-band: UT held upright, so only its position varies
        return Scene(freq_mmwave=28e9, fixed_ut_orientation=(0.0, 0.0, 0.0))
    return Scene()


PROFILES = {
    "desk": {},
    "paper": {"ap_geometry": (1, 8, 8), "n_train": 56000, "n_test": 14000},
}


def with_profile(cfg: ExperimentConfig, profile: str) -> ExperimentConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    return replace(cfg, profile=profile, **PROFILES[profile])


def load_config(path=None, profile: str | None = None, **overrides) -> ExperimentConfig:
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_dict(doc)
    if profile is not None:
        cfg = with_profile(cfg, profile)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg
