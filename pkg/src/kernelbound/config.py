"""Run configuration: a flat, sectioned key=value text format.

The format is deliberately tiny so it can be parsed anywhere: full-line
comments start with '#', sections are '[name]' headers, and every other
nonempty line is 'key = value'.  A top-level 'schema_version = 1' line must
appear before the first section.  Matrices are written row-major with ';'
between rows ("1 0.5; 0.5 1"), lists as whitespace-separated scalars.

Every diagnostic names the file, the line, and the offending section.key so
a bad config can be fixed without reading this module.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coefficients import diagonal_family
from .errors import ConfigError, KernelBoundError

__all__ = ["RunConfig", "parse_config", "parse_config_text", "family_from_config"]

SCHEMA_VERSION = 1

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_MISSING = object()

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass
class RunConfig:
    """Parsed configuration with enough bookkeeping for good error messages."""

    path: str
    sections: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)   # (section, key) -> line number
    schema_version: int = SCHEMA_VERSION

    # -- location helpers -------------------------------------------------

    def _where(self, section, key=None):
        if key is not None and (section, key) in self.lines:
            return "%s:%d" % (self.path, self.lines[(section, key)])
        return self.path

    def has_section(self, section: str) -> bool:
        return section in self.sections

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    # -- typed accessors ---------------------------------------------------

    def get_str(self, section: str, key: str, default=_MISSING) -> str:
        sec = self.sections.get(section)
        if sec is None or key not in sec:
            if default is not _MISSING:
                return default
            if sec is None:
                raise ConfigError("%s: missing section [%s] (needed for %s.%s)"
                                  % (self.path, section, section, key))
            raise ConfigError("%s: missing key %s.%s"
                              % (self.path, section, key))
        return sec[key]

    def get_int(self, section, key, default=_MISSING) -> int:
        raw = self.get_str(section, key, default)
        if raw is default and default is not _MISSING:
            return default
        try:
            return int(str(raw))
        except ValueError:
            raise ConfigError("%s: %s.%s expects an integer, got %r"
                              % (self._where(section, key), section, key, raw))

    def get_float(self, section, key, default=_MISSING) -> float:
        raw = self.get_str(section, key, default)
        if raw is default and default is not _MISSING:
            return default
        try:
            val = float(str(raw))
        except ValueError:
            raise ConfigError("%s: %s.%s expects a number, got %r"
                              % (self._where(section, key), section, key, raw))
        if not np.isfinite(val):
            raise ConfigError("%s: %s.%s must be finite, got %r"
                              % (self._where(section, key), section, key, raw))
        return val

    def get_bool(self, section, key, default=_MISSING) -> bool:
        raw = self.get_str(section, key, default)
        if isinstance(raw, bool):
            return raw
        word = str(raw).strip().lower()
        if word in _TRUE:
            return True
        if word in _FALSE:
            return False
        raise ConfigError("%s: %s.%s expects true/false, got %r"
                          % (self._where(section, key), section, key, raw))

    def get_floats(self, section, key, default=_MISSING) -> list:
        raw = self.get_str(section, key, default)
        if not isinstance(raw, str):
            return list(raw)
        out = []
        for tok in raw.split():
            try:
                out.append(float(tok))
            except ValueError:
                raise ConfigError("%s: %s.%s expects numbers, got %r"
                                  % (self._where(section, key), section, key, tok))
        if not out:
            raise ConfigError("%s: %s.%s is empty"
                              % (self._where(section, key), section, key))
        return out

    def get_ints(self, section, key, default=_MISSING) -> list:
        raw = self.get_str(section, key, default)
        if not isinstance(raw, str):
            return list(raw)
        out = []
        for tok in raw.split():
            try:
                out.append(int(tok))
            except ValueError:
                raise ConfigError("%s: %s.%s expects integers, got %r"
                                  % (self._where(section, key), section, key, tok))
        return out

    def get_strs(self, section, key, default=_MISSING) -> list:
        raw = self.get_str(section, key, default)
        if not isinstance(raw, str):
            return list(raw)
        return raw.split()

    def get_matrix(self, section, key, default=_MISSING) -> np.ndarray:
        """Row-major matrix, rows split on ';'.  Rows must have equal length."""
        raw = self.get_str(section, key, default)
        if not isinstance(raw, str):
            return np.asarray(raw, dtype=float)
        rows = []
        for part in raw.split(";"):
            row = []
            for tok in part.split():
                try:
                    row.append(float(tok))
                except ValueError:
                    raise ConfigError(
                        "%s: %s.%s expects a numeric matrix, got %r"
                        % (self._where(section, key), section, key, tok))
            if row:
                rows.append(row)
        if not rows:
            raise ConfigError("%s: %s.%s is empty"
                              % (self._where(section, key), section, key))
        width = len(rows[0])
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ConfigError(
                    "%s: %s.%s row %d has %d entries, expected %d"
                    % (self._where(section, key), section, key, i,
                       len(row), width))
        return np.asarray(rows, dtype=float)


def parse_config_text(text: str, path: str = "<config>") -> RunConfig:
    sections: dict = {}
    lines: dict = {}
    section: Optional[str] = None
    version: Optional[int] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("%s:%d: unterminated section header %r"
                                  % (path, lineno, line))
            name = line[1:-1].strip()
            if not _IDENT.match(name):
                raise ConfigError("%s:%d: bad section name %r"
                                  % (path, lineno, name))
            if name in sections:
                raise ConfigError("%s:%d: duplicate section [%s]"
                                  % (path, lineno, name))
            sections[name] = {}
            section = name
            continue
        if "=" not in line:
            raise ConfigError("%s:%d: expected 'key = value' or '[section]', "
                              "got %r" % (path, lineno, line))
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _IDENT.match(key):
            raise ConfigError("%s:%d: bad key %r" % (path, lineno, key))
        if not value:
            raise ConfigError("%s:%d: empty value for %s"
                              % (path, lineno, key))
        if section is None:
            if key != "schema_version":
                raise ConfigError(
                    "%s:%d: %r appears before any [section]; only "
                    "schema_version may" % (path, lineno, key))
            try:
                version = int(value)
            except ValueError:
                raise ConfigError("%s:%d: schema_version expects an integer, "
                                  "got %r" % (path, lineno, value))
            continue
        if key in sections[section]:
            first = lines[(section, key)]
            raise ConfigError("%s:%d: duplicate key %s.%s (first set at "
                              "line %d)" % (path, lineno, section, key, first))
        sections[section][key] = value
        lines[(section, key)] = lineno

    if version is None:
        raise ConfigError("%s: missing schema_version (must appear before the "
                          "first section)" % path)
    if version != SCHEMA_VERSION:
        raise ConfigError("%s: unsupported schema_version %d (this build "
                          "reads %d)" % (path, version, SCHEMA_VERSION))
    return RunConfig(path=path, sections=sections, lines=lines,
                     schema_version=version)


def parse_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("%s: cannot read config: %s" % (path, exc))
    return parse_config_text(text, path=str(path))


def family_from_config(cfg: RunConfig):
    """Build the coefficient family described by [family] and [grid]."""
    kind = cfg.get_str("family", "kind")
    if kind not in ("polynomial", "exponential"):
        raise ConfigError("%s: family.kind must be polynomial or exponential, "
                          "got %r" % (cfg._where("family", "kind"), kind))
    d = cfg.get_int("grid", "d")
    m = cfg.get_int("family", "m")
    theta = cfg.get_matrix("family", "theta")
    gamma = cfg.get_matrix("family", "gamma")
    try:
        return diagonal_family(
            kind, d, m,
            zeta_diag=cfg.get_float("family", "zeta", 1.0),
            alpha=cfg.get_float("family", "alpha", 0.0),
            eta=cfg.get_float("family", "eta", 1.0),
            beta=cfg.get_float("family", "beta", 0.0),
            theta=theta,
            gamma=gamma,
        )
    except KernelBoundError as exc:
        raise ConfigError("%s: [family] rejected: %s"
                          % (cfg._where("family", "kind"), exc))
