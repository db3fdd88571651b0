"""Run configuration: one JSON document holding every module's parameters.

Unknown keys are rejected at every nesting level and omitted keys take the
dataclass defaults.  ``RunConfig.to_dict`` produces the fully resolved form
that commands echo beside their outputs.

Seed splitting: the master ``seed`` feeds ``np.random.SeedSequence``, whose
``spawn`` children (in :data:`SEED_STREAMS` order) drive scene generation,
oracle state sampling, training and evaluation.  Training further splits its
stream into init / environment / replay / chain-noise / eval generators.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from covsem.channel import ChannelEnv, DetectionConfig, LinkGeometry, PerConfig
from covsem.contract import EconParams, Mode, PtParams
from covsem.environment import DEFAULT_SNR_DB, EnvConfig, EnvRanges
from covsem.rdsac.trainer import TrainConfig
from covsem.semantics import SemanticConfig

SEED_STREAMS = ("scenes", "oracle", "train", "eval")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneBatch:
    n_scenes: int = 100
    height: int = 64
    width: int = 64
    n_objects: int = 3


@dataclass(frozen=True)
class OracleSettings:
    n_states: int = 50
    grid_n: int = 101
    random_draws: int = 256
    n_jobs: int = 1


@dataclass(frozen=True)
class SweepSettings:
    refs: tuple[float, ...] = (60.0, 110.0, 160.0)
    n_states: int = 20


@dataclass(frozen=True)
class EvalSettings:
    n_states: int = 50


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs"
    channel: ChannelEnv = field(default_factory=ChannelEnv)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    per: PerConfig = field(default_factory=PerConfig)
    willie: LinkGeometry = field(default_factory=lambda: LinkGeometry(300.0, 100.0))
    semantic: SemanticConfig = field(default_factory=SemanticConfig)
    scenes: SceneBatch = field(default_factory=SceneBatch)
    snr_db: tuple[float, ...] = DEFAULT_SNR_DB
    econ: EconParams = field(default_factory=EconParams)
    pt: PtParams = field(default_factory=PtParams)
    mode: Mode = Mode.PT
    infeasible_reward: float = 0.0
    env: EnvRanges = field(default_factory=EnvRanges)
    train: TrainConfig = field(default_factory=TrainConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.env, self.econ, self.pt, self.mode, self.infeasible_reward)

    def seeds(self) -> dict[str, int]:
        """Per-stream integer seeds derived from the master seed."""
        children = np.random.SeedSequence(self.seed).spawn(len(SEED_STREAMS))
        return {name: int(c.generate_state(1, np.uint64)[0] >> np.uint64(1))
                for name, c in zip(SEED_STREAMS, children)}

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data, "config")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _convert(tp, value, where: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object, got {type(value).__name__}")
        return _build(tp, value, where)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            raise ConfigError(f"{where}: {value!r} is not one of {[m.value for m in tp]}") from None
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{where}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(f"{where}: expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(a, v, f"{where}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if origin is Union or origin is types.UnionType:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return None if value is None else _convert(args[0], value, where)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is bool and not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true/false, got {value!r}")
    if tp is str and not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _build(cls, data: dict, where: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {k: _convert(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: Union[str, Path, None] = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read a JSON config (defaults when ``path`` is None), then apply dotted-key overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    cfg = RunConfig.from_dict(data)
    for key, value in (overrides or {}).items():
        cfg = _apply_override(cfg, key, value)
    return cfg


def _apply_override(cfg: RunConfig, dotted: str, value) -> RunConfig:
    """Set ``a.b`` style keys by rebuilding through the validating path."""
    doc = cfg.to_dict()
    node = doc
    parts = dotted.split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"config: unknown section {dotted!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"config: unknown key {dotted!r}")
    node[parts[-1]] = _to_plain(value)
    return RunConfig.from_dict(doc)


def save_config(cfg: RunConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
