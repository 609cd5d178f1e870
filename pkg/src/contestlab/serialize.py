"""Deterministic report serialization.

Floats are rendered with 17 significant digits so identical run
configurations produce byte-identical files.  Non-finite floats are rejected
before anything reaches disk.
"""

from __future__ import annotations

import json
import math
import os
import tempfile

from .errors import ValidationError

__all__ = ["to_json", "to_csv", "write_atomic"]


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValidationError(f"non-finite float {x!r} cannot be serialized")
    return format(x, ".17g")


def _emit(obj, out: list):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt_float(obj))
    elif isinstance(obj, dict):
        out.append("{")
        first = True
        for k, v in obj.items():
            if not isinstance(k, str):
                raise ValidationError("JSON object keys must be strings")
            if not first:
                out.append(", ")
            first = False
            out.append(json.dumps(k))
            out.append(": ")
            _emit(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _emit(v, out)
        out.append("]")
    else:
        raise ValidationError(f"cannot serialize object of type {type(obj).__name__}")


def to_json(obj) -> str:
    """Render a report dictionary as deterministic JSON text."""
    out: list = []
    _emit(_plainify(obj), out)
    out.append("\n")
    return "".join(out)


def _plainify(obj):
    """Convert numpy scalars and report objects into plain JSON-ready values."""
    if hasattr(obj, "to_dict"):
        return _plainify(obj.to_dict())
    if isinstance(obj, dict):
        return {k: _plainify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plainify(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return obj.item()
    return obj


def to_csv(columns: list, rows: list) -> str:
    """Render rows of dictionaries as CSV with a fixed column order."""
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            value = row[col]
            if isinstance(value, bool):
                cells.append("true" if value else "false")
            elif isinstance(value, int):
                cells.append(str(value))
            elif isinstance(value, float):
                if math.isnan(value):
                    cells.append("nan")
                elif math.isinf(value):
                    cells.append("inf" if value > 0 else "-inf")
                elif value == int(value) and abs(value) < 2**53:
                    cells.append(str(int(value)))
                else:
                    cells.append(_fmt_float(value))
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_atomic(path: str, text: str):
    """Write the full payload through a temp file and an atomic replace."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".contest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
