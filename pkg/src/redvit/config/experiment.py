"""
Experiment configuration.

Every section is a frozen dataclass with defaults; JSON documents are mapped onto them by
``ExperimentConfig.from_dict``, which rejects unknown keys at every level. A field can carry
``metadata={"key": ...}`` when its JSON key differs from the attribute name.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from redvit.errors import ConfigError

DEFAULT_EPSILON = 16 / 255


def _check(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class DatasetConfig:
    n: int = 5000
    seed: int = 0
    source: str = "shapes"
    path: Optional[str] = None
    train: float = 0.8
    val: float = 0.1

    def __post_init__(self):
        _check(self.source in ("shapes", "records"), f"dataset.source must be 'shapes' or 'records', got '{self.source}'")
        _check(self.source != "records" or self.path is not None, "dataset.path is required for source 'records'")
        _check(0 < self.train and 0 <= self.val and self.train + self.val < 1, "dataset.train/val fractions must leave a test split")


@dataclass(frozen=True)
class ModelSpec:
    name: str = "vit_l4_d32"
    kind: str = "vit"
    num_layers: int = 4
    hidden_dim: int = 32
    num_heads: int = 4
    ffn_hidden: int = 64
    patch_size: int = 8
    widths: tuple[int, ...] = (16, 32, 64)
    seed: int = 1

    def __post_init__(self):
        _check(self.kind in ("vit", "cnn"), f"zoo model '{self.name}' has unknown kind '{self.kind}'")


DEFAULT_ZOO = (
    ModelSpec("vit_l4_d32", "vit", num_layers=4, hidden_dim=32, num_heads=4, ffn_hidden=64, seed=1),
    ModelSpec("vit_l6_d32", "vit", num_layers=6, hidden_dim=32, num_heads=4, ffn_hidden=64, seed=2),
    ModelSpec("vit_l4_d48", "vit", num_layers=4, hidden_dim=48, num_heads=4, ffn_hidden=96, seed=3),
    ModelSpec("cnn3", "cnn", widths=(16, 32, 64), seed=4),
)


@dataclass(frozen=True)
class ZooConfig:
    models: tuple[ModelSpec, ...] = DEFAULT_ZOO
    epochs: int = 5
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    min_accuracy: float = 0.8
    dir: str = "zoo"

    def __post_init__(self):
        names = [m.name for m in self.models]
        _check(len(names) == len(set(names)), "zoo model names must be unique")
        _check(self.epochs >= 0 and self.batch_size >= 1, "zoo.epochs must be >= 0 and zoo.batch_size >= 1")

    def spec(self, name: str) -> ModelSpec:
        for m in self.models:
            if m.name == name:
                return m
        raise ConfigError(f"Unknown zoo model '{name}'")


@dataclass(frozen=True)
class AttackSettings:
    epsilon: float = DEFAULT_EPSILON
    steps: int = 10
    alpha: Optional[float] = None
    mu: float = 1.0
    method: str = "ours"
    surrogate: str = "vit_l4_d32"
    surrogates: tuple[str, ...] = ()
    victims: tuple[str, ...] = ()
    count: int = 100
    split: str = "test"
    filter: str = "all"

    def __post_init__(self):
        _check(0 <= self.epsilon <= 1, f"attack.epsilon must lie in [0, 1], got {self.epsilon}")
        _check(self.steps >= 1, f"attack.steps must be >= 1, got {self.steps}")
        _check(self.alpha is None or self.alpha > 0, f"attack.alpha must be positive, got {self.alpha}")
        _check(self.method in ("mi", "ours"), f"attack.method must be 'mi' or 'ours', got '{self.method}'")
        _check(self.filter in ("all", "clean-correct"), f"attack.filter must be 'all' or 'clean-correct', got '{self.filter}'")
        _check(self.split in ("train", "val", "test"), f"attack.split must be train, val or test, got '{self.split}'")
        _check(self.count >= 1, "attack.count must be >= 1")

    @property
    def step_size(self) -> float:
        return self.alpha if self.alpha is not None else self.epsilon / self.steps


@dataclass(frozen=True)
class SparsifySettings:
    r: float = 0.3
    mode: str = "multiplicative"

    def __post_init__(self):
        _check(0 <= self.r <= 1, f"ops.sparsify.r must lie in [0, 1], got {self.r}")
        _check(self.mode in ("multiplicative", "neginf"), f"ops.sparsify.mode must be multiplicative or neginf, got '{self.mode}'")


@dataclass(frozen=True)
class PermuteSettings:
    p: float = 0.5
    r: float = 0.5

    def __post_init__(self):
        _check(0 <= self.p <= 1 and 0 <= self.r <= 1, "ops.permute.p and ops.permute.r must lie in [0, 1]")


@dataclass(frozen=True)
class CleanSettings:
    r: float = 0.3

    def __post_init__(self):
        _check(0 <= self.r <= 1, f"ops.clean.r must lie in [0, 1], got {self.r}")


@dataclass(frozen=True)
class MoeSettings:
    experts: int = field(default=3, metadata={"key": "E"})
    drop: float = field(default=0.3, metadata={"key": "d"})

    def __post_init__(self):
        _check(self.experts >= 1, f"ops.moe.E must be >= 1, got {self.experts}")
        _check(0 <= self.drop < 1, f"ops.moe.d must lie in [0, 1), got {self.drop}")


@dataclass(frozen=True)
class OpsConfig:
    sparsify: SparsifySettings = SparsifySettings()
    permute: PermuteSettings = PermuteSettings()
    clean: CleanSettings = CleanSettings()
    moe: MoeSettings = MoeSettings()


OP_NAMES = ("identity", "sparsify", "permute", "clean", "moe")


@dataclass(frozen=True)
class PolicyConfig:
    s: int = 2
    lr: float = 0.05
    prob_floor: float = 0.01
    learn: bool = True
    pool: tuple[str, ...] = OP_NAMES

    def __post_init__(self):
        _check(len(self.pool) >= 1, "policy.pool must not be empty")
        _check(len(set(self.pool)) == len(self.pool), "policy.pool entries must be distinct")
        _check(all(p in OP_NAMES for p in self.pool), f"policy.pool entries must be among {OP_NAMES}")
        _check(0 <= self.s <= len(self.pool), "policy.s must lie in [0, len(policy.pool)]")
        _check(0 <= self.prob_floor and self.prob_floor * len(self.pool) < 1,
               "policy.prob_floor times the pool size must be below 1")


@dataclass(frozen=True)
class RobustConfig:
    count: int = 16
    mode: str = "dynamic"
    outer_steps: int = 10
    inner_steps: int = 5
    lr: float = 0.05
    init_scale: float = 0.02
    epochs: int = 3
    batch_size: int = 8
    calibration: int = 128
    tokens: Optional[str] = None

    def __post_init__(self):
        _check(self.count >= 0, "robust.count must be >= 0")
        _check(self.mode in ("dynamic", "global"), f"robust.mode must be dynamic or global, got '{self.mode}'")
        _check(self.outer_steps >= 0 and self.inner_steps >= 1, "robust.outer_steps >= 0 and robust.inner_steps >= 1 required")
        _check(self.batch_size >= 1 and self.calibration >= 1, "robust.batch_size and robust.calibration must be >= 1")


PROBE_KINDS = ("token-drop", "attn-zero", "head-drop", "ffn-drop")


@dataclass(frozen=True)
class ProbeConfig:
    model: str = "vit_l4_d32"
    kinds: tuple[str, ...] = PROBE_KINDS
    ratios: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    draws: int = 3
    count: int = 500

    def __post_init__(self):
        _check(all(k in PROBE_KINDS for k in self.kinds), f"probe.kinds must be among {PROBE_KINDS}")
        _check(all(0 <= r < 1 for r in self.ratios), "probe.ratios must lie in [0, 1)")
        _check(self.draws >= 1, "probe.draws must be >= 1")


SWEEP_KINDS = ("sparsify", "permute", "clean", "moe", "robust")


@dataclass(frozen=True)
class SweepConfig:
    kind: str = "sparsify"
    seeds: int = 3
    count: int = 50
    grid: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        _check(self.kind in SWEEP_KINDS, f"sweep.kind must be among {SWEEP_KINDS}")
        _check(self.seeds >= 1 and self.count >= 1, "sweep.seeds and sweep.count must be >= 1")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset: DatasetConfig = DatasetConfig()
    zoo: ZooConfig = ZooConfig()
    attack: AttackSettings = AttackSettings()
    ops: OpsConfig = OpsConfig()
    policy: PolicyConfig = PolicyConfig()
    robust: RobustConfig = RobustConfig()
    probe: ProbeConfig = ProbeConfig()
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()

    def __post_init__(self):
        _check(0 <= self.seed < 2**64, f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        return _build(cls, data, "")

    def to_dict(self) -> dict:
        return _dump(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]

    def with_seed(self, seed: Optional[int]) -> ExperimentConfig:
        return self if seed is None else dataclasses.replace(self, seed=seed)


def load_config(path: Optional[str | Path]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config '{path}': {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config '{path}' is not valid JSON: {e}") from e
    return ExperimentConfig.from_dict(data)


def _key(f: dataclasses.Field) -> str:
    return f.metadata.get("key", f.name)


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"Section '{path or '<root>'}' must be a JSON object")
    hints = typing.get_type_hints(cls)
    known = {_key(f): f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"Unknown config key '{_join(path, key)}'")
    kwargs = {}
    for key, f in known.items():
        if key in data:
            kwargs[f.name] = _coerce(hints[f.name], data[key], _join(path, key))
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"Invalid section '{path or '<root>'}': {e}") from e


def _coerce(tp, value: Any, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"'{path}' must be a list")
        item = args[0]
        return tuple(_coerce(item, v, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"'{path}' must be a boolean")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{path}' must be an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{path}' must be a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"'{path}' must be a string")
        return value
    raise ConfigError(f"Unsupported config type at '{path}'")


def _dump(value: Any):
    if dataclasses.is_dataclass(value):
        return {_key(f): _dump(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, tuple):
        return [_dump(v) for v in value]
    return value


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key
