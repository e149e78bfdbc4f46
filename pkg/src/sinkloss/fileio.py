"""Reading histogram batches and cost matrices from CSV or JSON files.

CSV files carry one histogram per row (or one cost-matrix row per line);
JSON files carry either a bare nested array or an object with "mu", "nu"
and/or "cost" keys. Parse errors always name the file, row and column.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import SinklossError


class InputFormatError(SinklossError):
    """A file failed to parse or validate; the message locates the problem."""

    def __init__(self, path: str, detail: str, row: int | None = None, col: int | None = None):
        self.path = path
        self.row = row
        self.col = col
        where = path
        if row is not None:
            where += f": row {row}"
        if col is not None:
            where += f", column {col}"
        super().__init__(f"{where}: {detail}")


def is_json_file(path: str) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        for ch in fh.read(64):
            if not ch.isspace():
                return ch in "{["
    return False


def _rows_to_matrix(path: str, rows: list[list[float]]) -> np.ndarray:
    if not rows:
        raise InputFormatError(path, "file contains no data rows")
    width = len(rows[0])
    for r, row in enumerate(rows):
        if len(row) != width:
            raise InputFormatError(
                path, f"expected {width} columns (as in row 0), found {len(row)}", row=r
            )
    return np.asarray(rows, dtype=float)


def _parse_csv(path: str) -> np.ndarray:
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for r, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            values = []
            for col, field in enumerate(line.split(",")):
                try:
                    values.append(float(field))
                except ValueError:
                    raise InputFormatError(
                        path, f"not a number: {field.strip()!r}", row=r, col=col
                    ) from None
            rows.append(values)
    return _rows_to_matrix(path, rows)


def _coerce_matrix(path: str, obj, key: str | None = None) -> np.ndarray:
    label = f"JSON key {key!r}" if key else "JSON array"
    if not isinstance(obj, list):
        raise InputFormatError(path, f"{label} must be an array of rows")
    rows = []
    for r, row in enumerate(obj):
        if not isinstance(row, list):
            raise InputFormatError(path, f"{label}: expected an array", row=r)
        for col, x in enumerate(row):
            if not isinstance(x, (int, float)) or isinstance(x, bool):
                raise InputFormatError(
                    path, f"{label}: not a number: {x!r}", row=r, col=col
                )
        rows.append([float(x) for x in row])
    return _rows_to_matrix(path, rows)


def load_json_document(path: str) -> dict[str, np.ndarray]:
    """Parse a JSON input file into matrices keyed by 'mu'/'nu'/'cost'."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise InputFormatError(path, f"invalid JSON: {err}") from None
    if isinstance(doc, list):
        return {"data": _coerce_matrix(path, doc)}
    if not isinstance(doc, dict):
        raise InputFormatError(path, "JSON document must be an object or array")
    out = {}
    for key in ("mu", "nu", "cost"):
        if key in doc:
            out[key] = _coerce_matrix(path, doc[key], key=key)
    if not out:
        raise InputFormatError(path, 'JSON object has none of the keys "mu", "nu", "cost"')
    return out


def load_matrix(path: str, key: str | None = None) -> np.ndarray:
    """Load a 2-D array from CSV, a bare JSON array, or a keyed JSON object."""
    try:
        is_json = is_json_file(path)
    except OSError as err:
        raise InputFormatError(path, str(err)) from None
    if not is_json:
        return _parse_csv(path)
    doc = load_json_document(path)
    if "data" in doc:
        return doc["data"]
    if key is not None and key in doc:
        return doc[key]
    if len(doc) == 1:
        return next(iter(doc.values()))
    raise InputFormatError(
        path, f"JSON object holds {sorted(doc)}; pass the file once and omit the other flags"
    )
