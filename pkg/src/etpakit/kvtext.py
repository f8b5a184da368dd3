"""Flat ``key = value`` text: the config and metadata format.

One assignment per line, ``#`` starts a comment, keys may carry dotted
sections.  The format is deliberately diff-friendly and language-agnostic.
"""

from __future__ import annotations


class KvParseError(ValueError):
    """Malformed key = value text; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


def parse_kv(text: str) -> dict[str, tuple[str, int]]:
    """Parse to ``{key: (raw_value, line_no)}``, preserving source lines."""
    out: dict[str, tuple[str, int]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KvParseError(line_no, f"expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise KvParseError(line_no, "empty key")
        if key in out:
            raise KvParseError(line_no, f"duplicate key {key!r}")
        out[key] = (value.strip(), line_no)
    return out


def coerce_scalar(raw: str):
    """Best-effort typing of a raw value: bool, int, float, else string."""
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def coerce_list(raw: str) -> list:
    """Comma-separated scalars."""
    return [coerce_scalar(item.strip()) for item in raw.split(",") if item.strip()]


def format_kv(mapping: dict) -> str:
    """Serialize a flat mapping; values via ``repr``-free plain formatting."""
    lines = []
    for key, value in mapping.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
