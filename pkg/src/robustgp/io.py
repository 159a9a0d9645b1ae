"""CSV reading and writing for datasets, predictions and result tables.

Files carry a header row. Inputs are named ``x1 .. xd``, the response ``y``
and an optional ``is_outlier`` flag. Floats are written with 17 significant
digits so that reading a file back gives exactly the written values.
"""
import csv
import re

import numpy as np

from .gp import Dataset

_INPUT = re.compile(r"^x([1-9][0-9]*)$")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def format_float(value):
    return format(float(value), ".17g")


def _format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_rows(stream, header, rows):
    """Write ``rows`` under ``header`` to an open text stream."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])


def write_table(path, header, rows):
    """Write ``rows`` under ``header``; floats at full precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_rows(fh, header, rows)


def read_table(path):
    """Header and raw string rows; ragged rows are rejected."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file, a header row is required")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}"
            )
    return header, body


def _numeric_column(path, header, body, name):
    col = header.index(name)
    out = np.empty(len(body))
    for i, row in enumerate(body):
        try:
            out[i] = float(row[col])
        except ValueError:
            raise DataError(
                f"{path}: row {i + 2}, column {name!r}: non-numeric value {row[col]!r}"
            ) from None
        if not np.isfinite(out[i]):
            raise DataError(f"{path}: row {i + 2}, column {name!r}: non-finite value")
    return out


def input_columns(header, path="<csv>"):
    """Names ``x1 .. xd`` present in ``header``, checked to be contiguous."""
    found = sorted(int(m.group(1)) for m in map(_INPUT.match, header) if m)
    if not found:
        raise DataError(f"{path}: no input columns named x1, x2, ...")
    if found != list(range(1, len(found) + 1)):
        raise DataError(f"{path}: input columns must be x1..x{len(found)} without gaps")
    return [f"x{k}" for k in found]


def read_inputs(path):
    """Input matrix from a CSV; any other columns are ignored."""
    header, body = read_table(path)
    names = input_columns(header, path)
    if not body:
        raise DataError(f"{path}: no data rows")
    return np.column_stack([_numeric_column(path, header, body, n) for n in names])


def read_dataset(path):
    """Dataset and outlier mask (``None`` when the file has no flag column)."""
    header, body = read_table(path)
    if "y" not in header:
        raise DataError(f"{path}: missing response column 'y'")
    X = read_inputs(path)
    y = _numeric_column(path, header, body, "y")
    mask = None
    if "is_outlier" in header:
        flags = _numeric_column(path, header, body, "is_outlier")
        if not np.all(np.isin(flags, (0.0, 1.0))):
            raise DataError(f"{path}: column 'is_outlier' must hold 0 or 1")
        mask = flags.astype(bool)
    return Dataset(X, y), mask


def write_dataset(path, data, outlier_mask=None):
    header = [f"x{k + 1}" for k in range(data.dim)] + ["y"]
    columns = [data.X[:, k] for k in range(data.dim)] + [data.y]
    if outlier_mask is not None:
        header.append("is_outlier")
        columns.append(np.asarray(outlier_mask, dtype=bool))
    write_table(path, header, zip(*columns))


def read_columns(path, names):
    """Selected numeric columns by name, each as a float array."""
    header, body = read_table(path)
    missing = [n for n in names if n not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    return [_numeric_column(path, header, body, n) for n in names]
