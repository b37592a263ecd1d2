"""Deterministic text emitters for artifacts.

All floating-point output is printed with 17 significant digits so that
parsing the artifact back recovers the exact double; key order follows
insertion order, so identical inputs yield byte-identical files.
"""

from __future__ import annotations

import json
import math


def fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite value in output: {x!r}")
    return f"{x:.17g}"


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    inner = " " * (indent * (level + 1))
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(inner + it for it in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{json.dumps(str(k))}: {_emit(v, indent, level + 1)}" for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(inner + it for it in items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def json_dumps(obj, indent: int = 2) -> str:
    """JSON text with 17-significant-digit floats and stable key order."""
    return _emit(obj, indent, 0) + "\n"


def csv_text(fieldnames: list[str], rows: list[dict]) -> str:
    """CSV with a fixed header row; floats at 17 significant digits."""
    def cell(value) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return fmt_float(value)
        return str(value)

    lines = [",".join(fieldnames)]
    lines += [",".join(cell(row.get(f)) for f in fieldnames) for row in rows]
    return "\n".join(lines) + "\n"
