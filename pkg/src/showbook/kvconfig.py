"""Reader for the flat ``key = value`` config grammar.

Grammar, one entry per line::

    line    := blank | comment | entry
    comment := optional spaces, then "#" and anything up to end of line
    entry   := key SP* "=" SP* value
    key     := any characters except "=" and "#", surrounding spaces stripped
    value   := comma separated fields; each field is stripped of spaces

Trailing ``# ...`` comments are allowed after a value.  Keys must be unique
within a file.  Both the schema file and the behaviour profile file use this
grammar; what the fields mean is up to the caller.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def parse_kv(text: str, path=None) -> list[tuple[str, list[str], int]]:
    """Return ``(key, fields, line_number)`` triples in file order."""
    entries = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError("empty key", path, lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        seen.add(key)
        fields = [f.strip() for f in value.split(",")]
        if any(f == "" for f in fields):
            raise ConfigError(f"empty field in value for {key!r}", path, lineno)
        entries.append((key, fields, lineno))
    return entries


def read_kv(path) -> list[tuple[str, list[str], int]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("file not found", path) from None
    return parse_kv(text, path)
