"""Flat ``key = value`` configuration files.

One setting per line, ``#`` starts a comment, blank lines are ignored. Keys
use the CLI flag spelling with dashes or underscores interchangeably, so
``parallel_ratio = 0.5`` and ``parallel-ratio = 0.5`` both set
``--parallel-ratio``.
"""
from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, message: str, path=None, lineno=None):
        where = f"{path}:{lineno}: " if path is not None and lineno is not None else ""
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


def canonical_key(key: str) -> str:
    return key.strip().replace("-", "_")


def parse_config(text: str, path=None) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        key, value = line.split("=", 1)
        key = canonical_key(key)
        if not key:
            raise ConfigError("empty key", path, lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        out[key] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    return parse_config(Path(path).read_text(encoding="utf-8"), path)


def parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_list(value, item=str) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(item(v) for v in value)
    return tuple(item(v.strip()) for v in str(value).split(",") if v.strip())
