"""Deterministic JSON and CSV output.

Floats are written with 17 significant digits so that identical runs give
byte-identical files. Complex numbers become ``[re, im]``; non-finite floats
become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""
from __future__ import annotations

import csv
import io
import math
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if x == 0:
        return "0.0"  # drops the sign of -0.0
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def _str(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch in '"\\':
            out.append("\\" + ch)
        elif ch == "\n":
            out.append("\\n")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _dump(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    elif isinstance(obj, (complex, np.complexfloating)):
        out.append(f"[{fmt_float(obj.real)}, {fmt_float(obj.imag)}]")
    elif isinstance(obj, str):
        out.append(_str(obj))
    elif isinstance(obj, np.ndarray):
        _dump(obj.tolist(), indent, level, out)
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + _str(str(k)) + ": ")
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        # short numeric rows stay on one line
        if all(isinstance(v, (int, float, complex, np.number)) and not isinstance(v, bool)
               for v in obj) and len(obj) <= 8:
            parts = []
            for v in obj:
                buf = []
                _dump(v, indent, level + 1, buf)
                parts.append("".join(buf))
            out.append("[" + ", ".join(parts) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    out = []
    _dump(obj, indent, 0, out)
    return "".join(out) + "\n"


def matrix_json(M) -> list:
    """Rows of ``[re, im]`` pairs."""
    return [[complex(v) for v in row] for row in np.asarray(M)]


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                cells.append(str(int(v)))
            elif isinstance(v, str):
                cells.append(v)
            else:
                cells.append(fmt_float(v).strip('"'))
        w.writerow(cells)
    return buf.getvalue()
