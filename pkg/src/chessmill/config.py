"""Run configuration: INI file, environment, and flag layering.

Precedence, lowest to highest: built-in defaults, config file sections,
CHESSMILL_* environment variables, command-line flags. Designed for
unattended batch runs: everything a grid job needs can live in one file or
the job environment, with flags reserved for ad-hoc overrides.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Optional


class ConfigError(ValueError):
    pass


@dataclass(slots=True)
class RunConfig:
    """Everything the pipeline subcommands consume. Field metadata below maps
    each field to its INI section/key and CHESSMILL_* variable."""

    pgn: tuple[str, ...] = ()
    eco: Optional[str] = None
    store: str = "chessmill-store"
    out: str = "chessmill-out"
    workload: Optional[str] = None        # default: <out>/workload.fen
    manifests: Optional[str] = None       # default: <out>/shards
    engine: str = ""
    depth: int = 20
    multipv: int = 1
    position_timeout: float = 120.0
    shard_size: int = 500
    pool_size: int = 4
    retry_limit: int = 2
    key_fields: int = 6
    bin_width: int = 25
    top_k: int = 4
    plot: bool = False
    require_elos: bool = False
    year_min: Optional[int] = None
    year_max: Optional[int] = None
    min_ply: Optional[int] = None
    require_result: bool = False

    def __post_init__(self) -> None:
        for name in ("depth", "multipv", "shard_size", "pool_size",
                     "bin_width", "top_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.retry_limit < 0:
            raise ConfigError(f"retry_limit must be >= 0, got {self.retry_limit}")
        if self.position_timeout <= 0:
            raise ConfigError("position_timeout must be positive")
        if self.key_fields not in (4, 6):
            raise ConfigError(f"key_fields must be 4 or 6, got {self.key_fields}")

    def workload_path(self) -> Path:
        return Path(self.workload) if self.workload else Path(self.out) / "workload.fen"

    def manifest_dir(self) -> Path:
        return Path(self.manifests) if self.manifests else Path(self.out) / "shards"

    def echo(self) -> str:
        """Compact effective-config string for output provenance."""
        parts = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value in ((), None, "", False):
                continue
            if f.name == "pgn":
                value = ";".join(value)
            parts.append(f"{f.name}={value}")
        return " ".join(parts)


# field name -> (ini section, value kind); the env var is CHESSMILL_<NAME>.
_FIELD_MAP: Mapping[str, tuple[str, str]] = {
    "pgn": ("paths", "list"),
    "eco": ("paths", "str"),
    "store": ("paths", "str"),
    "out": ("paths", "str"),
    "workload": ("paths", "str"),
    "manifests": ("paths", "str"),
    "engine": ("engine", "str"),
    "depth": ("engine", "int"),
    "multipv": ("engine", "int"),
    "position_timeout": ("engine", "float"),
    "shard_size": ("run", "int"),
    "pool_size": ("run", "int"),
    "retry_limit": ("run", "int"),
    "key_fields": ("run", "int"),
    "bin_width": ("stats", "int"),
    "top_k": ("stats", "int"),
    "plot": ("stats", "bool"),
    "require_elos": ("stats", "bool"),
    "year_min": ("stats", "int"),
    "year_max": ("stats", "int"),
    "min_ply": ("stats", "int"),
    "require_result": ("stats", "bool"),
}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _convert(name: str, kind: str, text: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in _TRUE_WORDS:
                return True
            if low in _FALSE_WORDS:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "list":
            return tuple(p.strip() for p in text.replace("\n", ",").split(",")
                         if p.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, object] | None = None,
) -> RunConfig:
    """Layer defaults <- config file <- environment <- explicit overrides
    (the CLI passes flag values as overrides)."""
    values: dict[str, object] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for name, (section, kind) in _FIELD_MAP.items():
            if parser.has_option(section, name):
                values[name] = _convert(name, kind, parser.get(section, name))
        for section in parser.sections():
            if section not in {"paths", "engine", "run", "stats"}:
                raise ConfigError(f"unknown config section [{section}]")
    env = os.environ if env is None else env
    for name, (_, kind) in _FIELD_MAP.items():
        var = f"CHESSMILL_{name.upper()}"
        if var in env:
            values[name] = _convert(name, kind, env[var])
    if overrides:
        for name, value in overrides.items():
            if value is None:
                continue
            if name == "pgn" and not isinstance(value, tuple):
                value = tuple(value)
            values[name] = value
    return RunConfig(**values)
