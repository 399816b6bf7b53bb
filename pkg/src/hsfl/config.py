"""Run configuration: JSON in, validated dataclasses out."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .channel import make_scenario
from .model_profile import ModelProfile, resolve_profile
from .orchestrator import SCHEMES, Hyperweights, Tolerances
from .trainer import make_synthetic_dataset


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ScenarioConfig:
    num_devices: int = 30
    radius_m: float = 100.0
    min_distance_m: float = 10.0
    distances_m: list | None = None
    server_tx_power_w: float = 1.0
    device_tx_power_w: float | list = 0.1
    broadcast_bandwidth_hz: float = 1.4e6
    total_bandwidth_hz: float = 1.4e6
    noise_psd_dbm_per_hz: float = -174.0
    server_cycles_per_s: float = 100e8
    device_cycles_min: float = 1e8
    device_cycles_max: float = 8e8
    flops_per_cycle: float = 16.0
    fading: bool = True


@dataclass
class DataConfig:
    total_samples: int = 50000
    phi: float = 1.0
    separation: float = 1.0
    test_fraction: float = 0.2


@dataclass
class WeightsConfig:
    rho1: float = 3.0
    rho2_index: int | None = 6
    rho2: float | None = None


@dataclass
class SweepConfig:
    rho1: list = field(default_factory=lambda: [3, 4, 5, 6, 7, 8, 9])
    rho2_index: list = field(default_factory=lambda: [3, 4, 5, 6, 7, 8, 9])


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    data: DataConfig = field(default_factory=DataConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    profile: str | dict = "paper_cnn"
    scheme: str = "proposed"
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    seed: int = 0
    rounds: int = 30
    train: bool = False
    target_loss: float | None = None
    eta: float = 0.05
    output_dir: str = "out"

    def hyperweights(self) -> Hyperweights:
        w = self.weights
        if w.rho2 is not None:
            return Hyperweights(w.rho1, w.rho2)
        return Hyperweights.from_index(w.rho1, w.rho2_index)

    def model_profile(self) -> ModelProfile:
        return resolve_profile(self.profile)

    def build(self):
        """Synthetic data and the matching scenario (device dataset sizes come from the partition)."""
        sc = self.scenario
        data = make_synthetic_dataset(
            sc.num_devices, self.data.total_samples, self.data.phi, self.seed, separation=self.data.separation,
            test_fraction=self.data.test_fraction,
        )
        scenario = make_scenario(
            data.sizes,
            np.random.default_rng([self.seed, 13]),
            radius_m=sc.radius_m,
            min_distance_m=sc.min_distance_m,
            distances_m=sc.distances_m,
            server_tx_power_w=sc.server_tx_power_w,
            device_tx_power_w=sc.device_tx_power_w,
            broadcast_bandwidth_hz=sc.broadcast_bandwidth_hz,
            total_bandwidth_hz=sc.total_bandwidth_hz,
            noise_psd_dbm_per_hz=sc.noise_psd_dbm_per_hz,
            server_cycles_per_s=sc.server_cycles_per_s,
            device_cycles_range=(sc.device_cycles_min, sc.device_cycles_max),
            flops_per_cycle=sc.flops_per_cycle,
        )
        return scenario, data

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "scenario": ScenarioConfig,
    "data": DataConfig,
    "weights": WeightsConfig,
    "tolerances": Tolerances,
    "sweep": SweepConfig,
}


def _section(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")
    try:
        return cls(**raw)
    except ValueError as exc:
        # Tolerances validates in __post_init__; point at the offending field
        msg = str(exc)
        name = next((k for k in raw if msg.startswith(k)), None)
        raise ConfigError(f"{path}.{name}" if name else path, msg) from None


def _positive(value, path):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
        raise ConfigError(path, f"must be a positive number, got {value!r}")


def validate(cfg: RunConfig) -> RunConfig:
    sc = cfg.scenario
    if not isinstance(sc.num_devices, int) or sc.num_devices < 1:
        raise ConfigError("scenario.num_devices", "must be a positive integer")
    for name in (
        "radius_m",
        "min_distance_m",
        "server_tx_power_w",
        "broadcast_bandwidth_hz",
        "total_bandwidth_hz",
        "server_cycles_per_s",
        "device_cycles_min",
        "device_cycles_max",
        "flops_per_cycle",
    ):
        _positive(getattr(sc, name), f"scenario.{name}")
    if sc.min_distance_m >= sc.radius_m:
        raise ConfigError("scenario.min_distance_m", "must be below radius_m")
    if sc.device_cycles_min > sc.device_cycles_max:
        raise ConfigError("scenario.device_cycles_min", "exceeds device_cycles_max")
    powers = sc.device_tx_power_w if isinstance(sc.device_tx_power_w, list) else [sc.device_tx_power_w]
    for i, p in enumerate(powers):
        _positive(p, f"scenario.device_tx_power_w[{i}]" if isinstance(sc.device_tx_power_w, list) else "scenario.device_tx_power_w")
    if isinstance(sc.device_tx_power_w, list) and len(sc.device_tx_power_w) != sc.num_devices:
        raise ConfigError("scenario.device_tx_power_w", "needs one entry per device")
    if sc.distances_m is not None:
        if len(sc.distances_m) != sc.num_devices:
            raise ConfigError("scenario.distances_m", "needs one entry per device")
        for i, d in enumerate(sc.distances_m):
            _positive(d, f"scenario.distances_m[{i}]")
    d = cfg.data
    if not isinstance(d.total_samples, int) or d.total_samples < 1:
        raise ConfigError("data.total_samples", "must be a positive integer")
    _positive(d.phi, "data.phi")
    _positive(d.separation, "data.separation")
    if not 0 < d.test_fraction < 1:
        raise ConfigError("data.test_fraction", "must lie in (0, 1)")
    n_train = d.total_samples - int(round(d.test_fraction * d.total_samples))
    if n_train < sc.num_devices:
        raise ConfigError("data.total_samples", "too few training samples for one per device")
    _positive(cfg.weights.rho1, "weights.rho1")
    if cfg.weights.rho2 is not None:
        _positive(cfg.weights.rho2, "weights.rho2")
    elif cfg.weights.rho2_index is None:
        raise ConfigError("weights", "give rho2 or rho2_index")
    try:
        cfg.hyperweights()
    except ValueError as exc:
        raise ConfigError("weights.rho2_index", str(exc)) from None
    for key in ("rho1", "rho2_index"):
        if not getattr(cfg.sweep, key):
            raise ConfigError(f"sweep.{key}", "must be nonempty")
    try:
        cfg.model_profile()
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError("profile", str(exc)) from None
    if cfg.scheme not in SCHEMES:
        raise ConfigError("scheme", f"must be one of {SCHEMES}")
    for i, s in enumerate(cfg.schemes):
        if s not in SCHEMES:
            raise ConfigError(f"schemes[{i}]", f"must be one of {SCHEMES}")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    if not isinstance(cfg.rounds, int) or cfg.rounds < 1:
        raise ConfigError("rounds", "must be a positive integer")
    if cfg.target_loss is not None:
        _positive(cfg.target_loss, "target_loss")
    if not isinstance(cfg.eta, (int, float)) or cfg.eta < 0:
        raise ConfigError("eta", "must be nonnegative")
    return cfg


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    kwargs = {}
    top = {f.name for f in fields(RunConfig)}
    for key, value in raw.items():
        if key not in top:
            raise ConfigError(key, "unknown field")
        kwargs[key] = _section(_SECTIONS[key], value, key) if key in _SECTIONS else value
    return validate(RunConfig(**kwargs))


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON config; a missing path or an empty file gives all defaults."""
    if path is None:
        return validate(RunConfig())
    text = Path(path).read_text()
    if not text.strip():
        return validate(RunConfig())
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return config_from_dict(raw)
