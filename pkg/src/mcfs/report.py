"""Deterministic serialization of results to JSON and CSV.

Every floating-point value is written with 17 significant digits, enough to
round-trip a double exactly, and mapping keys keep insertion order, so the
same inputs always produce the same bytes.  Timestamps and other one-off
details live in a separate ``meta`` object that callers can drop before
comparing reports.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "format_float",
    "jsonify",
    "dumps",
    "write_json",
    "write_csv",
    "wrap_report",
    "strip_meta",
]


def format_float(value: float) -> str:
    """Render a finite float with 17 significant digits."""
    value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError("reports may not contain NaN or infinity")
    if value == 0.0:
        value = 0.0  # normalize the sign of zero
    return format(value, ".17g")


def jsonify(obj):
    """Coerce nested results into plain JSON-compatible structures.

    Handles numpy scalars and arrays, dataclasses, complex numbers (as
    re/im pairs), paths, and the usual containers.
    """
    if obj is None or isinstance(obj, (bool, str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return [jsonify(item) for item in obj.tolist()] if obj.dtype == object else jsonify(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            field.name: jsonify(getattr(obj, field.name))
            for field in dataclasses.fields(obj)
            if not field.name.startswith("_")
        }
    if isinstance(obj, dict):
        return {str(key): jsonify(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj, key=repr) if isinstance(obj, (set, frozenset)) else obj
        return [jsonify(item) for item in items]
    raise InvalidInputError(f"cannot serialize object of type {type(obj).__name__}")


def _encode(obj, pieces: list, indent: int) -> None:
    pad = "  " * indent
    if obj is None:
        pieces.append("null")
    elif obj is True:
        pieces.append("true")
    elif obj is False:
        pieces.append("false")
    elif isinstance(obj, str):
        pieces.append(json.dumps(obj))
    elif isinstance(obj, int):
        pieces.append(str(obj))
    elif isinstance(obj, float):
        pieces.append(format_float(obj))
    elif isinstance(obj, dict):
        if not obj:
            pieces.append("{}")
            return
        pieces.append("{\n")
        for i, (key, value) in enumerate(obj.items()):
            pieces.append(f"{pad}  {json.dumps(str(key))}: ")
            _encode(value, pieces, indent + 1)
            pieces.append(",\n" if i < len(obj) - 1 else "\n")
        pieces.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            pieces.append("[]")
            return
        flat = all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in obj)
        if flat:
            body = ", ".join(
                format_float(x) if isinstance(x, float) else str(x) for x in obj
            )
            pieces.append(f"[{body}]")
            return
        pieces.append("[\n")
        for i, item in enumerate(obj):
            pieces.append(pad + "  ")
            _encode(item, pieces, indent + 1)
            pieces.append(",\n" if i < len(obj) - 1 else "\n")
        pieces.append(pad + "]")
    else:
        _encode(jsonify(obj), pieces, indent)


def dumps(obj) -> str:
    """Serialize to deterministic JSON text (trailing newline included)."""
    pieces: list = []
    _encode(jsonify(obj), pieces, 0)
    return "".join(pieces) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_csv(path, header, rows) -> Path:
    """Write rows of numbers under a header line, floats at 17 digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(format_float(cell))
            elif isinstance(cell, (int, np.integer)):
                cells.append(str(int(cell)))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def wrap_report(kind: str, params: dict, data) -> dict:
    """Assemble the standard report envelope; meta comes last and alone."""
    return {
        "kind": kind,
        "params": jsonify(params),
        "data": jsonify(data),
        "meta": {
            "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "tool": "mcfs",
        },
    }


def strip_meta(text: str) -> str:
    """Re-serialize a report with the meta object removed, for comparison."""
    payload = json.loads(text)
    payload.pop("meta", None)
    return dumps(payload)
