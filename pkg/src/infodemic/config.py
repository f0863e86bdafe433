"""Run configuration: defaults < INI file < command-line overrides."""
from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import ConfigInvalid
from .model import ModelConfig
from .pretrain import PretrainConfig
from .trainer import TrainConfig


@dataclass
class TextConfig:
    kind: str = "hashing"  # or "transformer"
    buckets: int = 2 ** 14
    model: str = ""  # transformer checkpoint name when kind == "transformer"


@dataclass
class RunSection:
    seed: int = 0
    jobs: int = 1
    fractions: tuple = (0.2, 0.4, 0.6, 0.8)


SECTIONS = {
    "run": RunSection,
    "model": ModelConfig,
    "train": TrainConfig,
    "pretrain": PretrainConfig,
    "text": TextConfig,
}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    text: TextConfig = field(default_factory=TextConfig)
    sources: dict = field(default_factory=dict)  # "section.key" -> "file" | "cli"

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            d = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        out["overrides"] = dict(self.sources)
        return out

    def text_encoder_spec(self) -> dict:
        spec = {"kind": self.text.kind, "dim": self.model.dim, "max_tokens": self.model.max_post_tokens}
        if self.text.kind == "hashing":
            spec["buckets"] = self.text.buckets
        else:
            spec["model"] = self.text.model
        return spec


def _coerce(cls, key: str, value: Any) -> Any:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ConfigInvalid(f"unknown setting {key!r} for section {cls.__name__}")
    default = getattr(cls(), key)
    hint = typing.get_type_hints(cls).get(key)
    if not isinstance(value, str):
        return tuple(value) if isinstance(default, tuple) else value
    text = value.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if default and isinstance(default[0], bool):
                return tuple(p.lower() in ("1", "true", "yes", "on") for p in parts)
            return tuple(float(p) for p in parts)
        if default is None and typing.get_origin(hint) is typing.Union:
            if text.lower() == "none":
                return None
            inner = [a for a in typing.get_args(hint) if a is not type(None)][0]
            return inner(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigInvalid(f"bad value {value!r} for {cls.__name__}.{key}") from exc


def _apply(cfg: RunConfig, section: str, key: str, value: Any, source: str) -> None:
    if section not in SECTIONS:
        raise ConfigInvalid(f"unknown config section {section!r}")
    target = getattr(cfg, section)
    setattr(target, key, _coerce(type(target), key, value))
    cfg.sources[f"{section}.{key}"] = source


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Build a config from defaults, an optional INI file and ``{"section.key": value}`` overrides."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigInvalid(f"{path}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                _apply(cfg, section, key, value, "file")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        _apply(cfg, section, key, value, "cli")
    cfg.train.seed = cfg.run.seed
    try:
        cfg.train.__post_init__()
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc
    if cfg.pretrain.dim != cfg.model.dim:
        if "pretrain.dim" in cfg.sources:
            raise ConfigInvalid("pretrain.dim must equal model.dim")
        cfg.pretrain.dim = cfg.model.dim
    return cfg
