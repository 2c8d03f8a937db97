"""Key-value config files and CSV dumps shared by the testbeds and CLI."""

from __future__ import annotations

import numpy as np

__all__ = ["parse_kv", "write_kv", "write_time_value_csv", "read_time_value_csv"]

_FMT = "{:.17g}"


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(part) for part in text.split(",")]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_kv(path) -> dict:
    """Parse a ``key = value`` text file; '#' starts a comment.

    Values become int/float/bool where possible, comma-separated values
    become lists, anything else stays a string.
    """
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = _parse_value(value)
    return out


def write_kv(path, mapping: dict):
    with open(path, "w") as fh:
        for key, value in mapping.items():
            if isinstance(value, float):
                value = _FMT.format(value)
            elif isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key} = {value}\n")


def write_time_value_csv(path, times, values):
    """Event/crossing dump: one ``time,value`` row per entry."""
    times = np.asarray(times, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    if times.size != values.size:
        raise ValueError("times and values must align")
    with open(path, "w") as fh:
        fh.write("time,value\n")
        for t, v in zip(times, values):
            fh.write(f"{_FMT.format(t)},{_FMT.format(v)}\n")


def read_time_value_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return np.empty(0), np.empty(0)
    return data[:, 0], data[:, 1]
