"""Deterministic JSON and CSV output.

Floats are written with 17 significant digits so that every value round-trips
exactly; non-finite floats become ``null``.  Key order is insertion order, so
identical inputs give identical bytes.
"""

import csv
import io
import json
import math
from importlib import resources

import numpy as np

__all__ = ["format_float", "to_plain", "dumps", "write_json", "write_csv", "csv_text", "load_schema"]


def format_float(x):
    x = float(x)
    if not math.isfinite(x):
        return "null"
    if x == 0.0:
        return "0.0"
    text = format(x, ".17g")
    return text if any(c in text for c in ".e") else text + ".0"


def to_plain(obj):
    """Recursively turn numpy containers and scalars into builtin types."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(obj, out, indent, level):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for k, (key, value) in enumerate(obj.items()):
            out.append(("," if k else "") + pad + json.dumps(key) + ": ")
            _emit(value, out, indent, level + 1)
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list)) for v in obj):
            out.append("[" + ", ".join(_scalar(v) for v in obj) + "]")
            return
        out.append("[")
        for k, value in enumerate(obj):
            out.append(("," if k else "") + pad)
            _emit(value, out, indent, level + 1)
        out.append(end + "]")
    else:
        out.append(_scalar(obj))


def _scalar(v):
    if v is None or isinstance(v, (bool, str, int)):
        return json.dumps(v)
    return format_float(v)


def dumps(obj, indent=2):
    out = []
    _emit(to_plain(obj), out, indent, 0)
    return "".join(out) + "\n"


def write_json(path, obj):
    text = dumps(obj)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


def _cell(v):
    v = to_plain(v)
    if isinstance(v, float):
        return "" if not math.isfinite(v) else format_float(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return " ".join(_cell(x) for x in v)
    return "" if v is None else str(v)


def csv_text(rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows, columns):
    text = csv_text(rows, columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


def load_schema(kind):
    text = resources.files("dtrans").joinpath("schemas", f"{kind}.json").read_text(encoding="utf-8")
    return json.loads(text)
