"""CSV tables and the JSON run manifest."""

from __future__ import annotations

import csv
import json
import math
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__

__all__ = ["format_value", "write_csv", "read_csv", "write_manifest", "read_manifest", "versions"]


def format_value(v) -> str:
    """17 significant digits for reals; ints, bools and strings verbatim."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, columns: dict) -> Path:
    """Write equal-length columns with a header row and "\\n" line endings.

    Complex columns are split into ``re_<name>`` and ``im_<name>``.
    """
    cols = {}
    for name, vals in columns.items():
        arr = np.asarray(vals)
        if np.iscomplexobj(arr):
            cols[f"re_{name}"] = arr.real
            cols[f"im_{name}"] = arr.imag
        else:
            cols[name] = arr
    lengths = {len(v) for v in cols.values()}
    if len(lengths) > 1:
        raise ValueError(f"column lengths differ: { {k: len(v) for k, v in cols.items()} }")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols.keys())
        for row in zip(*cols.values()):
            w.writerow([format_value(v.item() if hasattr(v, "item") else v) for v in row])
    return path


def read_csv(path) -> dict:
    """Columns as float arrays where possible, else string arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out


def versions() -> dict:
    return {
        "bistab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
