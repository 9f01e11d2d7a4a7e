"""
Run configuration: an INI-style file of ``key = value`` lines in the sections
[generator], [preprocess], [train], [augment] and [bench].

Every key must name a field below; anything else is rejected. Ranges are
written ``lo, hi``. Values given on the command line (``section.key=value``)
are applied on top of the file.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .preprocess import PreprocessConfig
from .synthgen import GeneratorConfig
from .training import AugmentConfig, TrainConfig

ENV_VAR = "SMCNN_CONFIG"


@dataclass(frozen=True)
class DatasetSize:
    n_defect: int = 196
    n_normal: int = 202


@dataclass(frozen=True)
class TrainSettings:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    split_ratio: float = 0.7
    augment: bool = False


@dataclass(frozen=True)
class BenchSettings:
    repeats: int = 100
    warmup: int = 10
    inner: int = 1
    windows: int = 8


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    size: DatasetSize = field(default_factory=DatasetSize)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    bench: BenchSettings = field(default_factory=BenchSettings)

    def train_config(self) -> TrainConfig:
        t = self.train
        aug = dataclasses.replace(self.augment) if t.augment else None
        return TrainConfig(t.learning_rate, t.batch_size, t.epochs, t.beta1, t.beta2,
                           t.eps, shuffle_seed=t.seed, augmentation=aug)


# section name -> (RunConfig attribute, dataclass objects whose fields it may set)
_SECTIONS = {
    "generator": ("generator", "size"),
    "preprocess": ("preprocess",),
    "train": ("train",),
    "augment": ("augment",),
    "bench": ("bench",),
}


def _convert(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
            if len(parts) != len(default):
                raise ValueError(raw)
            return tuple(float(p) for p in parts)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {type(default).__name__}") from None


def _apply(cfg: RunConfig, section: str, key: str, raw: str) -> RunConfig:
    where = f"[{section}] {key}"
    if section not in _SECTIONS:
        raise ConfigError(f"unknown section [{section}]")
    for attr in _SECTIONS[section]:
        target = getattr(cfg, attr)
        names = {f.name for f in dataclasses.fields(target)}
        if key in names:
            value = _convert(raw, getattr(target, key), where)
            try:
                updated = dataclasses.replace(target, **{key: value})
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from None
            return dataclasses.replace(cfg, **{attr: updated})
    raise ConfigError(f"unknown key {where}")


def parse(text: str, overrides: list[str] | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive field names
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if parser.defaults():
        raise ConfigError("keys outside any section: " + ", ".join(parser.defaults()))
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            cfg = _apply(cfg, section, key, raw)
    for item in overrides or []:
        dotted, sep, raw = item.partition("=")
        section, dot, key = dotted.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        cfg = _apply(cfg, section, key, raw)
    return cfg


def load(path=None, overrides: list[str] | None = None) -> RunConfig:
    """Read ``path``, else the file named by $SMCNN_CONFIG, else built-in defaults."""
    path = path or os.environ.get(ENV_VAR)
    text = Path(path).read_text() if path else ""
    return parse(text, overrides)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def dump(cfg: RunConfig) -> str:
    out = []
    for section, attrs in _SECTIONS.items():
        out.append(f"[{section}]")
        for attr in attrs:
            obj = getattr(cfg, attr)
            out += [f"{f.name} = {_format(getattr(obj, f.name))}" for f in dataclasses.fields(obj)]
        out.append("")
    return "\n".join(out)
