"""Scenario configuration as YAML.

The document mirrors ScenarioConfig: nested sections for world,
trajectory, camera, rates and noise, scalars at the top level. Unknown
keys are rejected with the offending key named, so typos fail loudly
instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .sim import (
    CameraConfig,
    NoiseConfig,
    Rates,
    ScenarioConfig,
    TrajectorySpec,
    WorldConfig,
)


class ConfigError(ValueError):
    """Malformed or invalid scenario configuration."""


_SECTIONS = {
    "world": WorldConfig,
    "trajectory": TrajectorySpec,
    "camera": CameraConfig,
    "rates": Rates,
    "noise": NoiseConfig,
}


def _build_section(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {path!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {path}.{key}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {path!r}: {exc}") from exc


def parse_config(data: dict | None) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed YAML mapping."""
    data = {} if data is None else dict(data)
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")

    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(cls, data.pop(name), name)
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {key}")
    kwargs.update(data)
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path: str | Path) -> ScenarioConfig:
    """Read and validate a scenario YAML file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(data)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply repeatable `key=value` settings with dotted section paths.

    Values are parsed as YAML scalars, so `camera.width=640` yields an
    int and `noise.depth_quantize_mm=false` a bool.
    """
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r} has an unparseable value: {exc}") from exc
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-section value")
        node[parts[-1]] = value
    return data


def config_with_overrides(path: str | Path | None, overrides: list[str]) -> ScenarioConfig:
    """Load a config file (or start from defaults) and apply overrides."""
    if path is None:
        data: dict = {}
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config document must be a mapping")
    apply_overrides(data, overrides)
    return parse_config(data)


def _plainify(value):
    if isinstance(value, tuple):
        return [_plainify(v) for v in value]
    if isinstance(value, list):
        return [_plainify(v) for v in value]
    if isinstance(value, dict):
        return {k: _plainify(v) for k, v in value.items()}
    return value


def config_to_dict(config: ScenarioConfig) -> dict:
    """ScenarioConfig as a plain mapping suitable for YAML output."""
    return _plainify(dataclasses.asdict(config))


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)
