"""Schema-versioned JSON reports and CSV tables.

Floats are written with 17 significant digits so every float64 survives a
round trip through any JSON parser.  Key order is the insertion order of the
payload, which the builders keep fixed.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

REPORT_VERSION = 1


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        s = format(x, ".17g")
        if s.lstrip("-").isdigit():
            s += ".0"
        return s
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(payload, indent: int = 2) -> str:
    return _encode(payload, indent, 0) + "\n"


def emit_report(payload: dict, path: str | Path) -> Path:
    """Write ``payload`` (with ``version`` first) as JSON to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"version": REPORT_VERSION}
    body.update({k: v for k, v in payload.items() if k != "version"})
    path.write_text(dumps(body))
    return path


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    return path


def support_histogram(Q: np.ndarray, kind: str) -> dict[str, int]:
    if kind == "prune":
        zeros = int(np.sum(Q == 0.0))
        return {"0": zeros, "nonzero": int(Q.size - zeros)}
    values, counts = np.unique(Q, return_counts=True)
    return {format(float(v), ".17g"): int(c) for v, c in zip(values, counts)}
