"""Run configuration: built-in defaults, a JSON `defaults` layer, and
per-run `overrides`, validated against every component's invariants at
load time.  Unknown sections or keys are rejected outright so a typo
cannot silently fall back to a default."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .agent import AgentConfig
from .memory import SamplingConfig, Thresholds
from .sde import SdeParams
from .utility import InterferenceParams, UtilityWeights


@dataclass(frozen=True)
class BufferConfig:
    n_liquid: int = 1000
    n_glass: int = 500
    n_crystal: int = 100
    knn_k: int = 10
    novelty_z: float = 100.0

    def __post_init__(self) -> None:
        if min(self.n_liquid, self.n_glass, self.n_crystal) < 1:
            raise ValueError("capacities must be >= 1")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.novelty_z <= 0:
            raise ValueError("novelty_z must be positive")

    @property
    def capacities(self) -> tuple[int, int, int]:
        return (self.n_liquid, self.n_glass, self.n_crystal)


@dataclass(frozen=True)
class SuiteConfig:
    n_tasks: int = 5
    grid_height: int = 8
    grid_width: int = 8
    permutation_seed: int = 42
    max_steps: int = 200
    goal_reward: float = 1.0

    def __post_init__(self) -> None:
        if self.n_tasks < 1:
            raise ValueError("n_tasks must be >= 1")
        if self.grid_height < 2 or self.grid_width < 2:
            raise ValueError("grid must be at least 2x2")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    sde: SdeParams = field(default_factory=SdeParams)
    weights: UtilityWeights = field(default_factory=UtilityWeights)
    thresholds: Thresholds = field(default_factory=Thresholds)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    interference: InterferenceParams = field(default_factory=InterferenceParams)
    buffer: BufferConfig = field(default_factory=BufferConfig)
    suite: SuiteConfig = field(default_factory=SuiteConfig)
    seeds: tuple[int, ...] = (0,)

    def to_dict(self) -> dict:
        out = {}
        for name, cls in _SECTIONS.items():
            out[name] = dataclasses.asdict(getattr(self, name))
        out["seeds"] = list(self.seeds)
        return out


_SECTIONS = {
    "sde": SdeParams,
    "weights": UtilityWeights,
    "thresholds": Thresholds,
    "sampling": SamplingConfig,
    "agent": AgentConfig,
    "interference": InterferenceParams,
    "buffer": BufferConfig,
    "suite": SuiteConfig,
}


class ConfigError(ValueError):
    pass


def _merge_layer(accum: dict, layer: dict, layer_name: str) -> None:
    for section, body in layer.items():
        if section == "seeds":
            if not isinstance(body, list) or not all(
                    isinstance(s, int) for s in body):
                raise ConfigError(f"{layer_name}.seeds must be a list of integers")
            accum["seeds"] = list(body)
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r} in {layer_name}")
        if not isinstance(body, dict):
            raise ConfigError(f"{layer_name}.{section} must be an object")
        known = {f.name for f in dataclasses.fields(_SECTIONS[section])}
        for key in body:
            if key not in known:
                raise ConfigError(
                    f"unknown key {section}.{key!r} in {layer_name}")
        accum.setdefault(section, {}).update(body)


def config_from_dict(doc: dict) -> RunConfig:
    """Build a validated RunConfig from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    for top in doc:
        if top not in ("defaults", "overrides"):
            raise ConfigError(f"unknown top-level key {top!r} "
                              "(expected 'defaults' and/or 'overrides')")
    accum: dict = {}
    for layer_name in ("defaults", "overrides"):
        layer = doc.get(layer_name, {})
        if not isinstance(layer, dict):
            raise ConfigError(f"{layer_name} must be an object")
        _merge_layer(accum, layer, layer_name)
    kwargs = {}
    for section, cls in _SECTIONS.items():
        body = dict(accum.get(section, {}))
        for key, val in list(body.items()):
            if isinstance(val, list):
                body[key] = tuple(val)
        try:
            kwargs[section] = cls(**body)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid section {section!r}: {exc}") from exc
    seeds = accum.get("seeds", [0])
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    return RunConfig(seeds=tuple(seeds), **kwargs)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(doc)


def default_config() -> RunConfig:
    return RunConfig()
