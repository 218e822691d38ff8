"""CSV ingestion and mutation-table cleaning."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, ParseError

MISSING = {"", "na", "nan", "NA", "NaN", "."}


def _parse_cell(text: str, allow_missing: bool) -> float:
    text = text.strip()
    if text in MISSING:
        if allow_missing:
            return math.nan
        raise ValueError("missing value")
    return float(text)


def _is_numeric_row(row: list[str]) -> bool:
    try:
        for cell in row:
            _parse_cell(cell, allow_missing=True)
    except ValueError:
        return False
    return True


def read_matrix(path, allow_missing: bool = False) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV, detecting a header by whether the first row parses.

    Parameters
    ----------
    path : str or Path
    allow_missing : bool
        Turn empty or ``NA`` cells into NaN instead of failing.

    Returns
    -------
    values : ndarray, shape (rows, cols)
    names : list of str or None
        Header names when the first row is not numeric.

    Raises
    ------
    ParseError
        On ragged rows or non-numeric cells; the message names the 1-based
        file row and 0-based column.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: file is empty")
    names = None
    start = 0
    if not _is_numeric_row(rows[0]):
        names = [c.strip() for c in rows[0]]
        start = 1
    width = len(rows[0])
    values = np.empty((len(rows) - start, width))
    for i, row in enumerate(rows[start:]):
        line = i + start + 1
        if len(row) != width:
            raise ParseError(f"{path}: row {line} has {len(row)} fields, expected {width}")
        for k, cell in enumerate(row):
            try:
                values[i, k] = _parse_cell(cell, allow_missing)
            except ValueError:
                raise ParseError(f"{path}: row {line}, column {k}: cannot parse {cell!r} as a number") from None
    if values.shape[0] == 0:
        raise ParseError(f"{path}: no data rows")
    return values, names


def read_response(path, allow_missing: bool = False) -> np.ndarray:
    values, _ = read_matrix(path, allow_missing)
    if values.shape[1] != 1:
        raise DimensionError(f"{path}: response must have one column, found {values.shape[1]}")
    return values[:, 0]


def write_matrix(path, values, names=None) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if names is not None:
            writer.writerow(names)
        for row in values:
            writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class CleanedTable:
    X: np.ndarray
    y: np.ndarray | None
    names: list[str] | None
    kept_rows: np.ndarray
    kept_columns: np.ndarray


def clean_mutation_table(X, y=None, names=None, min_count: int = 10) -> CleanedTable:
    """Drop incomplete rows, duplicate rows and rare mutation columns, in that order.

    A row is incomplete if any entry of ``X`` or ``y`` is NaN.  Duplicates
    are rows identical in every entry of ``X`` and ``y``; the first
    occurrence is kept.  A column is rare if it is nonzero in fewer than
    ``min_count`` of the remaining rows.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D table, got shape {X.shape}")
    full = X if y is None else np.column_stack([X, np.asarray(y, dtype=float)])
    if full.shape[0] != X.shape[0]:
        raise DimensionError(f"response has {full.shape[0]} rows, design has {X.shape[0]}")
    rows = np.flatnonzero(~np.isnan(full).any(axis=1))
    _, first = np.unique(full[rows], axis=0, return_index=True)
    rows = rows[np.sort(first)]
    counts = np.count_nonzero(X[rows], axis=0)
    cols = np.flatnonzero(counts >= min_count)
    return CleanedTable(
        X=X[np.ix_(rows, cols)],
        y=None if y is None else np.asarray(y, dtype=float)[rows],
        names=None if names is None else [names[k] for k in cols],
        kept_rows=rows,
        kept_columns=cols,
    )
