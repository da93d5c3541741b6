"""Repository-local configuration (``.treqs.toml``).

The file is flat TOML::

    include_globs = ["requirements/**/*.md"]
    extra_kinds = ["hazard"]
    extra_link_types = ["mitigates"]
    default_test_link = "tests"
    id_prefixes = { requirement = "REQ", hazard = "HAZ" }

Every key is optional. ``TREQS_CONFIG`` points at another file.
"""

from __future__ import annotations

import functools
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from treqs.model import BUILTIN_KINDS, BUILTIN_LINK_TYPES, is_token

CONFIG_NAME = ".treqs.toml"
CONFIG_ENV = "TREQS_CONFIG"

DEFAULT_PREFIXES = {
    "requirement": "REQ",
    "user-story": "US",
    "test": "TC",
    "information": "INFO",
}


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    include_globs: list[str] = field(default_factory=lambda: ["**/*.md"])
    extra_kinds: list[str] = field(default_factory=list)
    extra_link_types: list[str] = field(default_factory=list)
    default_test_link: str = "tests"
    id_prefixes: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def kinds(self) -> tuple[str, ...]:
        return BUILTIN_KINDS + tuple(k for k in self.extra_kinds if k not in BUILTIN_KINDS)

    @property
    def link_types(self) -> tuple[str, ...]:
        extra = tuple(t for t in self.extra_link_types if t not in BUILTIN_LINK_TYPES)
        return BUILTIN_LINK_TYPES + extra

    def prefix_for(self, kind: str) -> str:
        if kind in self.id_prefixes:
            return self.id_prefixes[kind]
        if kind in DEFAULT_PREFIXES:
            return DEFAULT_PREFIXES[kind]
        return re.sub(r"[^A-Za-z0-9]", "", kind).upper() or "ID"

    def matches(self, path: str) -> bool:
        return any(glob_match(g, path) for g in self.include_globs)


def _string_list(key: str, value: object) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{key} must be a list of strings")
    return list(value)


def _tokens(key: str, value: object) -> list[str]:
    items = _string_list(key, value)
    bad = [v for v in items if not is_token(v)]
    if bad:
        raise ConfigError(f"{key}: invalid token(s) {', '.join(bad)}")
    return items


def load_config(repo_root: Path | str) -> Config:
    """Read the config for *repo_root*; defaults when no file exists.

    Unknown keys are collected in ``Config.warnings``; bad values raise
    :class:`ConfigError`.
    """
    env = os.environ.get(CONFIG_ENV)
    path = Path(env) if env else Path(repo_root) / CONFIG_NAME
    if not path.is_file():
        if env:
            raise ConfigError(f"config file {path} (from {CONFIG_ENV}) not found")
        return Config()
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc

    config = Config()
    for key, value in data.items():
        if key == "include_globs":
            config.include_globs = _string_list(key, value)
        elif key == "extra_kinds":
            config.extra_kinds = _tokens(key, value)
        elif key == "extra_link_types":
            config.extra_link_types = _tokens(key, value)
        elif key == "default_test_link":
            if not isinstance(value, str) or not is_token(value):
                raise ConfigError("default_test_link must be a token")
            config.default_test_link = value
        elif key == "id_prefixes":
            if not isinstance(value, dict) or not all(
                isinstance(k, str) and isinstance(v, str) and is_token(v)
                for k, v in value.items()
            ):
                raise ConfigError("id_prefixes must map kinds to token prefixes")
            config.id_prefixes = dict(value)
        else:
            config.warnings.append(f"{path.name}: unknown key {key!r} ignored")
    return config


@functools.lru_cache(maxsize=128)
def _glob_regex(pattern: str) -> re.Pattern[str]:
    out = []
    i = 0
    while i < len(pattern):
        if pattern.startswith("**/", i):
            out.append("(?:.*/)?")
            i += 3
        elif pattern.startswith("**", i):
            out.append(".*")
            i += 2
        elif pattern[i] == "*":
            out.append("[^/]*")
            i += 1
        elif pattern[i] == "?":
            out.append("[^/]")
            i += 1
        else:
            out.append(re.escape(pattern[i]))
            i += 1
    return re.compile("".join(out) + r"\Z")


def glob_match(pattern: str, path: str) -> bool:
    """Match a ``/``-separated relative path; ``**/`` spans zero or more directories."""
    return bool(_glob_regex(pattern).match(path))
