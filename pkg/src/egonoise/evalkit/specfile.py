"""Plain-text scene spec files.

The first non-blank, non-comment line must be the header ``egonoise-scene 1``.
Every other line is ``key = value`` where ``key`` is a :class:`SceneSpec`
field; ``#`` starts a comment.  Omitted keys keep their defaults.  Example::

    egonoise-scene 1
    channels = 8
    snr_db = 0        # channel-0 input SNR
    target = chirp+multitone
"""
from __future__ import annotations

import dataclasses

from .scene import SceneSpec

__all__ = ["HEADER", "SpecParseError", "parse_spec", "read_spec", "format_spec"]

HEADER = "egonoise-scene 1"


class SpecParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


_TYPES = {f.name: f.type for f in dataclasses.fields(SceneSpec)}


def _convert(key: str, raw: str, line: int):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise SpecParseError(line, f"{key}: expected {kind}, got {raw!r}") from None
    return raw


def parse_spec(text: str) -> SceneSpec:
    values = {}
    seen_header = False
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not seen_header:
            if line != HEADER:
                raise SpecParseError(no, f"expected header {HEADER!r}, got {line!r}")
            seen_header = True
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise SpecParseError(no, f"expected 'key = value', got {line!r}")
        if key not in _TYPES:
            raise SpecParseError(no, f"unknown key {key!r}")
        if key in values:
            raise SpecParseError(no, f"duplicate key {key!r}")
        values[key] = _convert(key, value, no)
    if not seen_header:
        raise SpecParseError(1, f"missing header {HEADER!r}")
    try:
        return SceneSpec(**values)
    except ValueError as exc:
        raise SpecParseError(no, str(exc)) from None


def read_spec(path) -> SceneSpec:
    with open(path, encoding="utf-8") as f:
        return parse_spec(f.read())


def format_spec(spec: SceneSpec) -> str:
    lines = [HEADER]
    for f in dataclasses.fields(spec):
        lines.append(f"{f.name} = {getattr(spec, f.name)}")
    return "\n".join(lines) + "\n"
