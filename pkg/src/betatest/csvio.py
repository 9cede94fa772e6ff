"""CSV ingestion for observation matrices and JSON report serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError

SCHEMA_VERSION = 1


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_matrix(path, transpose: bool = False) -> np.ndarray:
    """Read a numeric CSV (comma or tab separated) into an n x p array.

    A first row containing any non-numeric cell is taken as a header.  Rows
    are observations unless ``transpose`` is set.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from None
    lines = text.splitlines()
    first = next((ln for ln in lines if ln.strip()), None)
    if first is None:
        raise InputError(f"{path}: file is empty")
    delimiter = "\t" if "\t" in first else ","
    rows = []
    width = None
    header_seen = False
    for lineno, row in enumerate(csv.reader(io.StringIO(text), delimiter=delimiter), start=1):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        if not rows and not header_seen and not all(_is_number(c) for c in cells):
            header_seen = True
            width = len(cells)
            continue
        if width is None:
            width = len(cells)
        if len(cells) != width:
            raise InputError(f"{path}: row {lineno} has {len(cells)} fields, expected {width}")
        values = []
        for col, cell in enumerate(cells, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: row {lineno}, column {col}: cannot parse {cell!r} as a number"
                ) from None
            if not math.isfinite(v):
                raise InputError(f"{path}: row {lineno}, column {col}: non-finite value {cell!r}")
            values.append(v)
        rows.append(values)
    if not rows:
        raise InputError(f"{path}: no numeric rows")
    arr = np.array(rows, dtype=float)
    return arr.T.copy() if transpose else arr


def write_matrix(path, data, header=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in np.asarray(data, dtype=float):
            writer.writerow([repr(float(v)) for v in row])


def jsonable(obj):
    """Recursively convert numpy scalars/arrays; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(payload, path=None) -> str:
    # float repr is the shortest string that round-trips to the same double
    text = json.dumps(jsonable(payload), indent=2, sort_keys=False)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text
