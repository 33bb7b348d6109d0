"""CSV readers with schema validation shared by the figure scripts."""

from __future__ import annotations

import csv

import numpy as np


class SchemaError(ValueError):
    """Input CSV does not match the documented artifact schema."""


def read_columns(path: str, required: tuple) -> dict:
    """Read a CSV into float column arrays; strings stay strings.

    Raises SchemaError naming the first missing column, or when the file
    carries no data rows.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{path}: missing column '{col}' "
                                  f"(found {header})")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out: dict = {}
    for col in header:
        vals = [row[col] for row in rows]
        try:
            out[col] = np.array([float(v) for v in vals])
        except ValueError:
            out[col] = np.array(vals)
    return out
