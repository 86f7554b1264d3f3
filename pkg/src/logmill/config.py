"""Run configuration: an INI file with flat key-value sections.

Command-line flags override file values; file values override the defaults
baked into this module.  Unknown sections or keys are input contract
violations, not silently ignored, so typos surface immediately.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .bench import DatasetSpec
from .extractor.backends import (
    DEFAULT_API_KEY_ENV,
    DEFAULT_CHAT_PATH,
    DEFAULT_EMBEDDINGS_PATH,
)
from .extractor.embedding import DEFAULT_DIM
from .extractor.pool import DEFAULT_SHOTS
from .tree import DEFAULT_DEPTH_CAP


class ConfigError(ValueError):
    """The config file violates the expected schema."""


@dataclass
class EngineConfig:
    depth_cap: int = DEFAULT_DEPTH_CAP
    shots: int = DEFAULT_SHOTS
    merge_policy: str = "auto"  # auto | interactive | off
    embedding_dim: int = DEFAULT_DIM

    def validate(self) -> None:
        if self.merge_policy not in ("auto", "interactive", "off"):
            raise ConfigError(f"unknown merge policy {self.merge_policy!r}")


@dataclass
class BackendConfig:
    kind: str = "remote"  # remote | oracle | replay
    base_url: str = ""
    model: str = ""
    chat_path: str = DEFAULT_CHAT_PATH
    api_key_env: str = DEFAULT_API_KEY_ENV
    embedding_kind: str = "hashing"  # hashing | remote
    embedding_model: str = ""
    embeddings_path: str = DEFAULT_EMBEDDINGS_PATH
    timeout: float = 30.0
    max_attempts: int = 5
    backoff_base: float = 0.5
    jitter: float = 0.1
    labels: str = ""  # structured CSV for the oracle backend
    replay: str = ""  # replay JSONL path
    record: str = ""  # record responses here while running
    seeds: str = ""  # optional seeds TSV

    def validate(self) -> None:
        if self.kind not in ("remote", "oracle", "replay"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.embedding_kind not in ("hashing", "remote"):
            raise ConfigError(f"unknown embedding kind {self.embedding_kind!r}")


@dataclass
class BenchConfig:
    estimated_call_latency: float = 0.0


@dataclass
class Config:
    engine: EngineConfig = field(default_factory=EngineConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    datasets: dict[str, DatasetSpec] = field(default_factory=dict)


def _apply_section(target, section: configparser.SectionProxy, name: str) -> None:
    known = {f.name: f.type for f in fields(target)}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{name}]")
        current = getattr(target, key)
        try:
            if isinstance(current, bool):
                value: object = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key} in [{name}]: {exc}") from None
        setattr(target, key, value)


def _dataset_spec(name: str, section: configparser.SectionProxy, base: Path) -> DatasetSpec:
    required = {"log", "structured", "format"}
    keys = set(section.keys())
    missing = required - keys
    if missing:
        raise ConfigError(f"[dataset.{name}] is missing {sorted(missing)}")
    unknown = keys - required - {"templates"}
    if unknown:
        raise ConfigError(f"[dataset.{name}] has unknown keys {sorted(unknown)}")

    def path_of(key: str) -> Path:
        value = Path(section[key])
        return value if value.is_absolute() else base / value

    return DatasetSpec(
        name=name,
        log_path=path_of("log"),
        structured_path=path_of("structured"),
        log_format=section["format"],
        templates_path=path_of("templates") if "templates" in section else None,
    )


def load_config(path: str | Path | None) -> Config:
    """Read a config file; a missing path returns pure defaults."""
    config = Config()
    if path is None:
        return config
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    # Keys and log-format values are case sensitive.
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config {path} is not valid INI: {exc}") from None

    for section_name in parser.sections():
        section = parser[section_name]
        if section_name == "engine":
            _apply_section(config.engine, section, section_name)
        elif section_name == "backend":
            _apply_section(config.backend, section, section_name)
        elif section_name == "bench":
            _apply_section(config.bench, section, section_name)
        elif section_name.startswith("dataset."):
            name = section_name.split(".", 1)[1]
            config.datasets[name] = _dataset_spec(name, section, path.parent)
        else:
            raise ConfigError(f"unknown config section [{section_name}]")
    config.engine.validate()
    config.backend.validate()
    return config
