"""CSV ingestion and emission.

Dialect: comma-separated, header row required, UTF-8, decimal point, no
quoting of numeric fields.  Floats are written with ``repr`` so that a
write/load round trip is bit-exact.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import Dataset

__all__ = ["load_csv", "write_dataset"]


def load_csv(
    path,
    response_col: str,
    count_col: str | None = None,
    likelihood: str = "binomial",
) -> Dataset:
    """Read a dataset; every column other than the response and the count
    column becomes a covariate, in header order.

    A missing count column encodes all-ones totals (plain logistic
    regression under the binomial likelihood).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        rows = list(reader)
    if response_col not in header:
        raise ValueError(f"{path}: response column {response_col!r} not in header {header}")
    if count_col is not None and count_col not in header:
        raise ValueError(f"{path}: count column {count_col!r} not in header {header}")
    y_pos = header.index(response_col)
    c_pos = header.index(count_col) if count_col is not None else None
    cov_pos = [k for k in range(len(header)) if k != y_pos and k != c_pos]
    if not cov_pos:
        raise ValueError(f"{path}: no covariate columns left after response/count")
    if not rows:
        raise ValueError(f"{path}: no data rows")

    n = len(rows)
    x = np.empty((n, len(cov_pos)))
    y = np.empty(n, dtype=np.int64)
    c = np.ones(n, dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        y[i] = _parse_int(row[y_pos], path, i, header[y_pos])
        if y[i] < 0:
            raise ValueError(f"{path}: negative response at row {i}, column {response_col!r}")
        if c_pos is not None:
            c[i] = _parse_int(row[c_pos], path, i, header[c_pos])
            if c[i] < 1:
                raise ValueError(
                    f"{path}: non-positive count at row {i}, column {count_col!r}"
                )
        for k, pos in enumerate(cov_pos):
            x[i, k] = _parse_float(row[pos], path, i, header[pos])

    ds = Dataset(X=x, Y=y, C=c, names=[header[k] for k in cov_pos])
    if likelihood != "negbin" and likelihood != "negative-binomial":
        bad = np.nonzero(ds.Y > ds.C)[0]
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"{path}: response exceeds total count at row {i}: "
                f"{response_col}={int(ds.Y[i])} > {count_col or '1'}={int(ds.C[i])}"
            )
    return ds


def _parse_int(text: str, path, row: int, col: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(
            f"{path}: non-integer value {text!r} at row {row}, column {col!r}"
        ) from None


def _parse_float(text: str, path, row: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(
            f"{path}: non-numeric value {text!r} at row {row}, column {col!r}"
        ) from None


def write_dataset(dataset: Dataset, path, response_col: str = "y", count_col: str = "c"):
    """Write a dataset as CSV: response, count (omitted when all totals are
    one), then the covariates by name."""
    path = Path(path)
    include_count = bool(np.any(dataset.C != 1))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [response_col] + ([count_col] if include_count else []) + list(dataset.names)
        writer.writerow(header)
        for i in range(dataset.N):
            row = [str(int(dataset.Y[i]))]
            if include_count:
                row.append(str(int(dataset.C[i])))
            row.extend(repr(float(v)) for v in dataset.X[i])
            writer.writerow(row)
