"""Deterministic JSON/CSV writers.

Floats are printed with 17 significant digits so every artifact round-trips
bit-exactly through ``json.loads``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    # keep floats recognisable as floats after a round trip
    return text if any(c in text for c in ".en") else text + ".0"


def _encode(obj: Any, indent: int | None, level: int) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return _join(items, "{", "}", indent, level)
    if isinstance(obj, (list, tuple)):
        items = [_encode(v, indent, level + 1) for v in obj]
        # numeric rows stay on one line to keep files compact
        if indent is not None and all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(items) + "]"
        return _join(items, "[", "]", indent, level)
    raise TypeError(f"cannot serialize object of type {type(obj).__name__}")


def _join(items: list[str], open_: str, close: str, indent: int | None, level: int) -> str:
    if not items:
        return open_ + close
    if indent is None:
        return open_ + ", ".join(items) + close
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    return open_ + "\n" + ",\n".join(pad + s for s in items) + "\n" + end + close


def dumps(obj: Any, indent: int | None = 1) -> str:
    return _encode(obj, indent, 0) + "\n"


def _target(path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def write_json(path: str | Path, obj: Any) -> None:
    _target(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: str | Path, header: list[str], rows: list[list[Any]]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if v is None:
                cells.append("")
            elif isinstance(v, (float, np.floating)):
                cells.append(_format_float(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    _target(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path: str | Path) -> list[dict[str, str]]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = text[0].split(",")
    return [dict(zip(header, line.split(","))) for line in text[1:] if line]
