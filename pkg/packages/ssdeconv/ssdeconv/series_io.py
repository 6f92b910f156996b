# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""CSV files of observation series.

A series file has a header row ``y1,...,yd`` followed by one row per time
step. Text after ``#`` is a comment (the writers put the effective
configuration on leading comment lines). Floats are written with 17
significant digits so a write/read round trip is exact.
"""

import math
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError
from .model import MIN_SERIES_LENGTH, ObservationSeries
from .utils import atomic_write_text, logger


def read_series(path: str | Path) -> ObservationSeries:
    """Parse a series CSV; raises DataError naming the offending line."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"{path}: cannot read series file: {e}") from e

    # Content of each physical line; the index is the 0-based line number.
    lines = pd.Series(text.splitlines(), dtype=object)
    content = lines.str.split("#", n=1).str[0].str.strip()
    rows = content[content != ""]
    if rows.empty:
        raise DataError(f"{path}: missing header row")
    line_numbers = rows.index.to_numpy()[1:] + 1
    header = [name.strip() for name in rows.iloc[0].split(",")]
    expected = [f"y{i + 1}" for i in range(len(header))]
    if header != expected:
        logger.warning("%s: header %s differs from %s", path, ",".join(header), ",".join(expected))

    widths = rows.iloc[1:].str.count(",").to_numpy() + 1
    ragged = np.flatnonzero(widths != len(header))
    if ragged.size:
        i = ragged[0]
        raise DataError(f"{path}: line {line_numbers[i]} has {widths[i]} fields, expected {len(header)}")
    if len(line_numbers) < MIN_SERIES_LENGTH:
        raise DataError(
            f"{path}: at least {MIN_SERIES_LENGTH} observations are required, got {len(line_numbers)}"
        )

    frame = pd.read_csv(StringIO("\n".join(rows.iloc[1:])), header=None, dtype=str)
    values = frame.map(_parse_cell)
    bad = values.isna().to_numpy()
    if bad.any():
        row, col = map(int, np.argwhere(bad)[0])
        raise DataError(
            f"{path}: line {line_numbers[frame.index[row]]} column {header[col]} "
            f"is not a number: {frame.iat[row, col]!r}"
        )
    return ObservationSeries(values.to_numpy(dtype=np.float64))


def _parse_cell(cell: str) -> float:
    # float() rounds correctly, so %.17g text reads back exactly.
    try:
        return float(cell)
    except ValueError:
        return math.nan


def write_matrix(
    values: np.ndarray,
    path: str | Path,
    *,
    prefix: str = "y",
    comments: list[str] | None = None,
):
    """Write rows of ``values`` under the header ``<prefix>1..<prefix>d``, atomically."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    frame = pd.DataFrame(values, columns=[f"{prefix}{i + 1}" for i in range(values.shape[1])])
    head = "".join(f"# {c}\n" for c in comments or [])
    atomic_write_text(path, head + frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))


def write_series(series: ObservationSeries, path: str | Path, comments: list[str] | None = None):
    write_matrix(series.values, path, prefix="y", comments=comments)
