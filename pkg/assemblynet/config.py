"""
Versioned JSON experiment config.

Every section is a frozen dataclass; unknown keys at any level are rejected and
missing keys take the defaults below.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar, Union

from .errors import ConfigError
from .training.trainer import TrainPlan

__all__ = [
    "SCHEMA_VERSION",
    "TilingConfig",
    "UNetSettings",
    "PlanConfig",
    "SslConfig",
    "ExperimentConfig",
    "load_config",
    "save_config",
]

SCHEMA_VERSION = 1

C = TypeVar("C")


@dataclass(frozen=True)
class TilingConfig:
    counts: Tuple[int, int, int] = (3, 3, 3)
    tile_dims: Tuple[int, int, int] = (16, 16, 16)

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", _triple(self.counts, "counts"))
        object.__setattr__(self, "tile_dims", _triple(self.tile_dims, "tile_dims"))


@dataclass(frozen=True)
class UNetSettings:
    base_filters: int = 8
    depth: int = 2
    dropout_rate: float = 0.5

    def __post_init__(self) -> None:
        if self.base_filters < 1 or self.depth < 1:
            raise ConfigError("unet.base_filters and unet.depth must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"unet.dropout_rate must lie in [0, 1), got {self.dropout_rate}")


@dataclass(frozen=True)
class PlanConfig:
    epochs_main: int = 10
    epochs_avg: int = 2
    lr: float = 1e-3
    mixup_alpha: float = 0.4

    def to_plan(self, seed: int, workers: int) -> TrainPlan:
        try:
            return TrainPlan(self.epochs_main, self.epochs_avg, self.lr, self.mixup_alpha, seed, workers)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class SslConfig:
    pseudo_plan: PlanConfig = field(default_factory=lambda: PlanConfig(4, 2))
    finetune_plan: PlanConfig = field(default_factory=lambda: PlanConfig(5, 1))
    generations: int = 1

    def __post_init__(self) -> None:
        if self.generations < 1:
            raise ConfigError(f"ssl.generations must be >= 1, got {self.generations}")


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    workers: Optional[int] = None
    mc_passes: int = 3
    use_prior: bool = True
    transfer_learning: bool = True
    cascade: bool = True
    flip_augmentation: bool = True
    label_pairs: Optional[Tuple[Tuple[int, int], ...]] = None
    coarse: TilingConfig = field(default_factory=lambda: TilingConfig((3, 3, 3), (8, 8, 8)))
    fine: TilingConfig = field(default_factory=lambda: TilingConfig((3, 3, 3), (16, 16, 16)))
    unet: UNetSettings = field(default_factory=UNetSettings)
    train_plan: PlanConfig = field(default_factory=PlanConfig)
    ssl: SslConfig = field(default_factory=SslConfig)

    def __post_init__(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.mc_passes < 1:
            raise ConfigError(f"mc_passes must be >= 1, got {self.mc_passes}")
        if self.label_pairs is not None:
            pairs = tuple(_pair(p) for p in self.label_pairs)
            object.__setattr__(self, "label_pairs", pairs)

    @property
    def resolved_workers(self) -> int:
        """Configured workers, or the available parallelism when unset."""
        return self.workers if self.workers is not None else (os.cpu_count() or 1)

    def plan(self, which: str = "train_plan") -> TrainPlan:
        """TrainPlan for ``train_plan``, ``pseudo_plan`` or ``finetune_plan``."""
        source = self.train_plan if which == "train_plan" else getattr(self.ssl, which)
        return source.to_plan(self.seed, self.resolved_workers)

    def replace(self, **changes: Any) -> "ExperimentConfig":
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["label_pairs"] = [list(p) for p in self.label_pairs] if self.label_pairs is not None else None
        return json.loads(json.dumps(data))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        :raises ConfigError: on unknown keys, wrong types or invalid values.
        """
        return _build(cls, data, "config")


def _triple(value: Any, name: str) -> Tuple[int, int, int]:
    try:
        triple = tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be three integers") from exc
    if len(triple) != 3 or any(v < 1 for v in triple):
        raise ConfigError(f"{name} must be three integers >= 1, got {value}")
    return triple


def _pair(value: Any) -> Tuple[int, int]:
    pair = tuple(int(v) for v in value)
    if len(pair) != 2:
        raise ConfigError(f"label pair must have two labels, got {value}")
    return pair


_NESTED: Dict[str, Type] = {
    "coarse": TilingConfig,
    "fine": TilingConfig,
    "unet": UNetSettings,
    "train_plan": PlanConfig,
    "ssl": SslConfig,
    "pseudo_plan": PlanConfig,
    "finetune_plan": PlanConfig,
}

_SCALARS: Dict[str, Tuple[type, ...]] = {
    "schema_version": (int,),
    "seed": (int,),
    "workers": (int, type(None)),
    "mc_passes": (int,),
    "use_prior": (bool,),
    "transfer_learning": (bool,),
    "cascade": (bool,),
    "flip_augmentation": (bool,),
    "base_filters": (int,),
    "depth": (int,),
    "dropout_rate": (int, float),
    "epochs_main": (int,),
    "epochs_avg": (int,),
    "lr": (int, float),
    "mixup_alpha": (int, float),
    "generations": (int,),
}


def _build(cls: Type[C], data: Any, path: str) -> C:
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}"
        if key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, where)
            continue
        expected = _SCALARS.get(key)
        if expected is not None:
            # bool is an int subclass; keep the two apart
            if isinstance(value, bool) and bool not in expected:
                raise ConfigError(f"{where} must not be a boolean")
            if not isinstance(value, expected):
                raise ConfigError(f"{where} has type {type(value).__name__}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    :raises ConfigError: if the file is not valid JSON or not a valid config.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def save_config(path: Union[str, Path], config: ExperimentConfig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
