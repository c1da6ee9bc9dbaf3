"""Flat ``key = value`` run configuration files.

Lines are UTF-8; ``#`` starts a comment; blank lines are ignored.  Every key
must be a field of the target dataclass (or one of the path keys), so typos
fail loudly instead of silently falling back to a default.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_run_config", "load_dataclass", "dump_config"]

PATH_KEYS = ("data", "out")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: str | None = None
    out: str | None = None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``{key: value}`` strings; duplicate keys are an error."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(value: str, kind, key: str):
    origin = typing.get_origin(kind)
    if origin is typing.Union or (origin is not None and type(None) in typing.get_args(kind)):
        args = [a for a in typing.get_args(kind) if a is not type(None)]
        if value.lower() in ("none", ""):
            return None
        kind = args[0]
    try:
        if kind is bool:
            v = value.lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind is tuple or typing.get_origin(kind) is tuple:
            return tuple(int(p) for p in value.replace(" ", "").split(",") if p)
        return str(value)
    except ValueError as e:
        raise ConfigError(f"{key}: cannot read {value!r} as {getattr(kind, '__name__', kind)}") from e


def load_dataclass(cls, values: dict[str, str], source: str = "<config>"):
    """Build ``cls`` from raw strings, typed by its annotations."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    kwargs = {k: _coerce(v, hints[k], k) for k, v in values.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{source}: {e}") from e


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a run config file (or defaults when ``path`` is None)."""
    values: dict[str, str] = {}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        values = parse_config_text(text, source)
    for k, v in (overrides or {}).items():
        values[k] = str(v)
    paths = {k: values.pop(k) for k in PATH_KEYS if k in values}
    return RunConfig(load_dataclass(ModelConfig, values, source), **paths)


def dump_config(obj) -> str:
    """Inverse of :func:`load_dataclass` for flat dataclasses."""
    lines = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
