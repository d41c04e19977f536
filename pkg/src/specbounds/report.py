"""Deterministic JSON / CSV writers.

Floats are written with 17 significant digits so that identical runs give
byte-identical files; non-finite floats become the strings "inf", "-inf",
"nan".
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _plain(obj):
    """Convert numpy scalars/arrays and dataclass-ish objects to JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with fixed float formatting."""
    out = io.StringIO()
    _write(_plain(obj), out, indent, 0)
    out.write("\n")
    return out.getvalue()


def _write(v, out, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, dict):
        if not v:
            out.write("{}")
            return
        out.write("{\n")
        for i, (k, x) in enumerate(v.items()):
            out.write(pad + json.dumps(k) + ": ")
            _write(x, out, indent, level + 1)
            out.write(",\n" if i < len(v) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(v, list):
        if not v:
            out.write("[]")
            return
        # short scalar lists stay on one line
        if all(not isinstance(x, (dict, list)) for x in v):
            out.write("[" + ", ".join(_scalar(x) for x in v) + "]")
            return
        out.write("[\n")
        for i, x in enumerate(v):
            out.write(pad)
            _write(x, out, indent, level + 1)
            out.write(",\n" if i < len(v) - 1 else "\n")
        out.write(end + "]")
    else:
        out.write(_scalar(v))


def _scalar(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        s = fmt_float(x)
        return s if math.isfinite(x) else json.dumps(s)
    return json.dumps(x)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([fmt_float(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def write_csv(path, rows) -> Path:
    path = Path(path)
    path.write_text(csv_text(rows), encoding="utf-8")
    return path
