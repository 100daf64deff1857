"""YAML run configuration.

One section per module. Unknown keys and wrongly typed values are rejected
with the dotted path of the offending field (and its line when the error
comes from the YAML parser).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, is_dataclass

import yaml

from .cluster import ClusterOptions
from .exceptions import ContractViolation
from .kfda import PriorConfig
from .model import ModelConfig
from .synth import SyntheticDomainSpec

CONFIG_SCHEMA = "gaussianface-config/1"


class ConfigError(ContractViolation):
    pass


@dataclass
class PipelineConfig:
    mode: str = "bc"  # bc | combined
    similarity: str = "cosine"
    threshold: float = 0.5
    fe_max_points: int = 400
    prob_clamp: float = 1e-6
    fe_sources: bool = False  # train the FE latent model with source domains too

    def __post_init__(self):
        if self.mode not in ("bc", "combined"):
            raise ConfigError(f"pipeline.mode must be bc or combined, got {self.mode!r}")
        if self.similarity not in ("cosine", "neg_euclidean", "inner"):
            raise ConfigError(f"pipeline.similarity {self.similarity!r} is not supported")


@dataclass
class EvalConfig:
    k: int = 10
    sources: int = 3
    workers: int = 1
    select: bool = False
    beta_grid: list = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.5, 1.0])
    sigma_grid: list = field(default_factory=lambda: [1e2, 1e3, 1e4])
    anchor_grid: list = field(default_factory=lambda: [50, 100, 200])
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("eval.k must be >= 2")
        if self.sources < 0:
            raise ConfigError("eval.sources must be >= 0")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("eval.validation_fraction must lie in (0, 1)")


@dataclass
class Config:
    schema: str = CONFIG_SCHEMA
    seed: int = 0
    data: SyntheticDomainSpec = field(default_factory=SyntheticDomainSpec)
    model: ModelConfig = field(default_factory=lambda: ModelConfig(prior=PriorConfig(sigma=1e3)))
    cluster: ClusterOptions = field(default_factory=ClusterOptions)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return _to_plain(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _to_plain(obj):
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(x) for x in obj]
    return obj


_NESTED = {
    Config: ("data", "model", "cluster", "pipeline", "eval"),
    ModelConfig: ("prior", "theta_scg", "z_scg"),
}

_NUMERIC = (int, float)


def _check_type(path, value, default):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, _NUMERIC):
        if isinstance(value, bool) or not isinstance(value, _NUMERIC):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if isinstance(default, int) and not isinstance(default, bool) and not float(value).is_integer():
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return type(default)(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list, got {value!r}")
    return value


def _build(base, data, path):
    """Overlay ``data`` on the dataclass instance ``base``."""
    cls = type(base)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown field(s): {', '.join(where + k for k in sorted(unknown))}")
    kwargs = {}
    nested = _NESTED.get(cls, ())
    for f in fields(cls):
        if f.name not in data:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        if f.name in nested:
            kwargs[f.name] = _build(getattr(base, f.name), data[f.name], sub)
        else:
            kwargs[f.name] = _check_type(sub, data[f.name], getattr(base, f.name))
    try:
        return dataclasses.replace(base, **kwargs)
    except ContractViolation as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def config_from_dict(data) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    schema = data.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"schema: unsupported {schema!r} (expected {CONFIG_SCHEMA!r})")
    return _build(Config(), data, "")


def load_config(path) -> Config:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: malformed YAML{where}: {getattr(exc, 'problem', exc)}") from exc
    try:
        return config_from_dict(data or {})
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dump_config(cfg: Config) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def save_config(cfg: Config, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))
