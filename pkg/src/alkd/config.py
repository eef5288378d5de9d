"""Config file loading (JSON or TOML) with key=value override resolution.

A config file carries up to three sections mirroring the dataclass field
names: {"model": {...}, "train": {...}, "finetune": {...}}. Overrides may
name a key as "section.key" or, when unambiguous, bare ("gamma=0"); values
parse as JSON literals with plain-string fallback.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Any

from .errors import ConfigError
from .finetune import FinetuneConfig
from .model import ModelConfig
from .train import TrainConfig

SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "finetune": FinetuneConfig,
}


def _section_fields(cls) -> dict[str, Any]:
    return {f.name: f for f in dataclasses.fields(cls)}


def load_config(path) -> dict:
    text = open(path, "rb").read()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        cfg = tomllib.loads(text.decode("utf-8"))
    else:
        cfg = json.loads(text.decode("utf-8"))
    if not isinstance(cfg, dict):
        raise ConfigError(f"config root must be a table/object, got {type(cfg).__name__}")
    validate_config_dict(cfg)
    return cfg


def validate_config_dict(cfg: dict) -> None:
    for section, body in cfg.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}; expected {sorted(SECTIONS)}")
        known = _section_fields(SECTIONS[section])
        for key in body:
            if key not in known:
                raise ConfigError(f"unknown config key {section}.{key}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    cfg = {k: dict(v) for k, v in cfg.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, _, raw = item.partition("=")
        value = _parse_value(raw)
        if "." in key:
            section, _, field = key.partition(".")
            if section not in SECTIONS or field not in _section_fields(SECTIONS[section]):
                raise ConfigError(f"override references unknown config key {key!r}")
            cfg.setdefault(section, {})[field] = value
        else:
            hits = [s for s, cls in SECTIONS.items() if key in _section_fields(cls)]
            if not hits:
                raise ConfigError(f"override references unknown config key {key!r}")
            if len(hits) > 1:
                raise ConfigError(
                    f"override key {key!r} is ambiguous across sections {hits}; qualify it"
                )
            cfg.setdefault(hits[0], {})[key] = value
    return cfg


def _build(cls, body: dict):
    try:
        return cls(**body)
    except TypeError as exc:
        raise ConfigError(f"bad {cls.__name__} fields: {exc}") from exc


def model_config(cfg: dict) -> ModelConfig:
    return _build(ModelConfig, cfg.get("model", {}))


def train_config(cfg: dict) -> TrainConfig:
    return _build(TrainConfig, cfg.get("train", {}))


def finetune_config(cfg: dict) -> FinetuneConfig:
    return _build(FinetuneConfig, cfg.get("finetune", {}))


def defaults_help() -> str:
    """One line per config key with its default, for --help output."""
    lines = []
    for section, cls in SECTIONS.items():
        for f in dataclasses.fields(cls):
            default = f.default if f.default is not dataclasses.MISSING else "(required)"
            lines.append(f"  {section}.{f.name} = {default}")
    return "config keys and defaults:\n" + "\n".join(lines)
