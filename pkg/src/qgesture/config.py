"""Radar waveform / pipeline configuration and derived quantities."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0


def _strict_from_dict(cls, d: dict):
    """Build a dataclass from a dict, rejecting unknown keys."""
    if not isinstance(d, dict):
        raise ConfigError(f"{cls.__name__} block must be a JSON object, got {type(d).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class RadarConfig:
    """FMCW TDM-MIMO waveform, timing and virtual-array geometry.

    Defaults: 60.5-64 GHz sweep, 20 frames/s, 256 chirps and 256 samples per
    frame, 4 TX x 4 RX. TX elements are spaced along the elevation axis, RX
    along the azimuth axis, both at half-wavelength, forming a 4x4 uniform
    rectangular virtual array.
    """

    f_start: float = 60.5e9
    f_stop: float = 64.0e9
    frame_rate: float = 20.0
    chirps_per_frame: int = 256
    samples_per_chirp: int = 256
    n_tx: int = 4
    n_rx: int = 4
    active_chirp_time: float = 160e-6
    tx_spacing: float = 0.5
    rx_spacing: float = 0.5
    noise_std: float = 0.01

    def __post_init__(self):
        if self.f_stop <= self.f_start:
            raise ConfigError("f_stop must exceed f_start")
        for name in ("chirps_per_frame", "samples_per_chirp", "n_tx", "n_rx"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.frame_rate <= 0 or self.active_chirp_time <= 0:
            raise ConfigError("frame_rate and active_chirp_time must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.chirps_per_frame % self.n_tx != 0:
            raise ConfigError("chirps_per_frame must be divisible by n_tx (TDM round-robin)")
        if self.active_chirp_time >= self.chirp_slot_time:
            raise ConfigError("active_chirp_time must fit inside one chirp slot")

    # -- derived waveform constants -----------------------------------------

    @property
    def bandwidth(self) -> float:
        return self.f_stop - self.f_start

    @property
    def center_frequency(self) -> float:
        return 0.5 * (self.f_start + self.f_stop)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    @property
    def chirp_slot_time(self) -> float:
        return 1.0 / (self.frame_rate * self.chirps_per_frame)

    @property
    def tx_slow_time(self) -> float:
        """Slow-time step of one TX in the round-robin (n_tx chirp slots)."""
        return self.n_tx * self.chirp_slot_time

    @property
    def chirps_per_tx(self) -> int:
        return self.chirps_per_frame // self.n_tx

    @property
    def n_virtual(self) -> int:
        return self.n_tx * self.n_rx

    @property
    def sweep_slope(self) -> float:
        return self.bandwidth / self.active_chirp_time

    @property
    def sample_rate(self) -> float:
        return self.samples_per_chirp / self.active_chirp_time

    @property
    def max_range(self) -> float:
        return self.sample_rate * SPEED_OF_LIGHT / (2.0 * self.sweep_slope)

    @property
    def velocity_resolution(self) -> float:
        return self.wavelength / (2.0 * self.chirps_per_tx * self.tx_slow_time)

    @property
    def max_velocity(self) -> float:
        """Unambiguous radial velocity (one-sided)."""
        return self.wavelength / (4.0 * self.tx_slow_time)

    @property
    def zero_doppler_bin(self) -> int:
        return self.chirps_per_tx // 2

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        return _strict_from_dict(cls, d)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class CfarParams:
    guard: int = 2
    train: int = 4
    pfa: float = 1e-4

    def __post_init__(self):
        if self.guard < 0 or self.train < 1:
            raise ConfigError("guard must be >= 0 and train >= 1")
        if not 0.0 < self.pfa < 1.0:
            raise ConfigError("pfa must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CfarParams":
        return _strict_from_dict(cls, d)


@dataclass(frozen=True)
class FeatureParams:
    n_bins: int = 64
    window_frames: int = 30
    range_bins_kept: int = 64          # range axis covers range_bins_kept * range_resolution
    velocity_threshold: float = 0.3    # m/s; a frame is "active" above this
    min_active_frames: int = 5         # burst must contain strictly more than this
    hangover_frames: int = 2           # consecutive inactive frames that close a burst
    dynamic_range_db: float = 40.0

    def __post_init__(self):
        if self.n_bins < 1 or self.window_frames < 1 or self.range_bins_kept < 1:
            raise ConfigError("bin and window counts must be >= 1")
        if self.velocity_threshold < 0 or self.dynamic_range_db <= 0:
            raise ConfigError("velocity_threshold must be >= 0 and dynamic_range_db > 0")
        if self.min_active_frames < 0 or self.hangover_frames < 1:
            raise ConfigError("min_active_frames >= 0 and hangover_frames >= 1 required")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureParams":
        return _strict_from_dict(cls, d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.001
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0 or self.eps <= 0:
            raise ConfigError("learning_rate and eps must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1/beta2 must lie in [0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return _strict_from_dict(cls, d)


@dataclass(frozen=True)
class DatasetSpec:
    classes: tuple = ()        # empty means all ten gesture classes
    per_class: int = 60
    users: tuple = ("B", "C", "D", "E")
    scenes: tuple = ("living_room", "conference_room")

    def __post_init__(self):
        if self.per_class < 1:
            raise ConfigError("per_class must be >= 1")
        if not self.users or not self.scenes:
            raise ConfigError("at least one user and one scene are required")
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "scenes", tuple(self.scenes))

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "per_class": self.per_class,
            "users": list(self.users),
            "scenes": list(self.scenes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return _strict_from_dict(cls, d)


@dataclass(frozen=True)
class AppConfig:
    """Top-level configuration: one block per pipeline stage."""

    radar: RadarConfig = field(default_factory=RadarConfig)
    cfar: CfarParams = field(default_factory=CfarParams)
    features: FeatureParams = field(default_factory=FeatureParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    output_dir: str = "out"

    _BLOCKS = {
        "radar": RadarConfig,
        "cfar": CfarParams,
        "features": FeatureParams,
        "train": TrainConfig,
        "dataset": DatasetSpec,
    }

    def to_dict(self) -> dict:
        return {
            "radar": self.radar.to_dict(),
            "cfar": self.cfar.to_dict(),
            "features": self.features.to_dict(),
            "train": self.train.to_dict(),
            "dataset": self.dataset.to_dict(),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AppConfig":
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(d) - set(cls._BLOCKS) - {"output_dir"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, block_cls in cls._BLOCKS.items():
            if name in d:
                kwargs[name] = block_cls.from_dict(d[name])
        if "output_dir" in d:
            if not isinstance(d["output_dir"], str):
                raise ConfigError("output_dir must be a string")
            kwargs["output_dir"] = d["output_dir"]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "AppConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def dump_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
