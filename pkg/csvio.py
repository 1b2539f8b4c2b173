"""CSV reading and writing with a fixed float format so identical inputs give identical files."""

from pathlib import Path
from typing import Iterable, Mapping, Sequence

import pandas as pd

from errors import SchemaError
from settings import get_config, get_logger

logger = get_logger(__name__)


def float_format() -> str:
    digits = get_config("output.significant_digits", 9)
    return f"%.{digits}g"


def write_csv(path: str | Path, columns: Mapping[str, Iterable], column_order: Sequence[str] | None = None) -> Path:
    """Write named columns to `path`; missing values are written as empty cells."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({name: list(values) for name, values in columns.items()})
    if column_order is not None:
        frame = frame.reindex(columns=list(column_order))
    frame.to_csv(path, index=False, float_format=float_format(), lineterminator="\n", na_rep="")
    logger.debug(f"Wrote {len(frame)} row(s) to {path}")
    return path


def write_rows(path: str | Path, rows: Sequence[Mapping[str, object]], column_order: Sequence[str]) -> Path:
    """Write a list of records in a fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame.from_records(list(rows), columns=list(column_order))
    frame.to_csv(path, index=False, float_format=float_format(), lineterminator="\n", na_rep="")
    logger.debug(f"Wrote {len(frame)} row(s) to {path}")
    return path


def read_csv(path: str | Path, expected_columns: Sequence[str]) -> pd.DataFrame:
    """Read a CSV whose header must be exactly `expected_columns`."""
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise SchemaError(f"{path} is not valid CSV: {e}") from e
    header = [str(c).strip() for c in frame.columns]
    if header != list(expected_columns):
        raise SchemaError(f"{path} has header {','.join(header)}, expected {','.join(expected_columns)}")
    frame.columns = header
    return frame
