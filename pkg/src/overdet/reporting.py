"""Deterministic text output: CSV tables and ``key = value`` blocks."""

from __future__ import annotations

import json
import math
from enum import Enum
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """Format a number with 17 significant digits (round-trips doubles)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path, header, columns) -> Path:
    path = Path(path)
    cols = [np.asarray(c).ravel() for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    lines = [",".join(header)]
    lines += [",".join(fmt(c[i]) for c in cols) for i in range(n)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return fmt(value)
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


def to_json(payload: dict) -> str:
    """Strict JSON; non-finite numbers become the strings "inf", "-inf", "nan"."""
    return json.dumps(_finite(_plain(payload)), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _text(value) -> str:
    if isinstance(value, list):
        return "[" + ", ".join(_text(v) for v in value) + "]"
    if value is None:
        return "none"
    if isinstance(value, (bool, int, float)):
        return fmt(value)
    return str(value)


def to_keyvalue(blocks: dict) -> str:
    """Render ``{section: {key: value}}`` as ``[section]`` / ``key = value`` text.

    Nested tables flatten to dotted keys.
    """
    out = []
    for section, items in blocks.items():
        out.append(f"[{section}]")
        stack = [("", _plain(items))]
        while stack:
            prefix, table = stack.pop()
            for key, value in table.items():
                name = f"{prefix}{key}"
                if isinstance(value, dict):
                    stack.append((name + ".", value))
                else:
                    out.append(f"{name} = {_text(value)}")
        out.append("")
    return "\n".join(out)
