"""Duration strings: parsing and canonical rendering.

Durations appear in scenario files (timeouts, `after` delays, fault
durations) and inside metrics expressions (`QUERY(metric, 1m, now)`).
Accepted forms: a bare number (seconds) or one or more `<number><unit>`
segments with units ms, s, m, h (e.g. ``10m``, ``1h30m``, ``500ms``).
"""

from __future__ import annotations

import re

_SEGMENT = re.compile(r"(\d+(?:\.\d+)?)(ms|s|m|h)")

_UNIT_SECONDS = {"ms": 0.001, "s": 1.0, "m": 60.0, "h": 3600.0}


def parse_duration(value) -> float:
    """Convert a duration literal to seconds. Raises ValueError when malformed."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if value < 0:
            raise ValueError(f"negative duration: {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"not a duration: {value!r}")
    text = value.strip()
    if not text:
        raise ValueError("empty duration")
    if re.fullmatch(r"\d+(?:\.\d+)?", text):
        return float(text)
    pos = 0
    total = 0.0
    for match in _SEGMENT.finditer(text):
        if match.start() != pos:
            raise ValueError(f"malformed duration: {value!r}")
        total += float(match.group(1)) * _UNIT_SECONDS[match.group(2)]
        pos = match.end()
    if pos != len(text):
        raise ValueError(f"malformed duration: {value!r}")
    return total


def format_duration(seconds: float) -> str:
    """Render seconds canonically, e.g. 600.0 -> "600s"."""
    if seconds == int(seconds):
        return f"{int(seconds)}s"
    return f"{seconds}s"
