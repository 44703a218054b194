"""
Field tables: point-wise scalar columns over (x1, x2), exported and ingested as
CSV so external tools (plotting, FEM references) can consume or provide them.
"""

import csv
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from dedem.errors import FieldTableError

logger = logging.getLogger(__name__)

COORDINATE_COLUMNS = ("x1", "x2")


class FieldTable(BaseModel, frozen=True):
    """Rows of (x1, x2, named scalar columns)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray
    columns: dict[str, np.ndarray]

    @field_validator("points", mode="before")
    @classmethod
    def as_point_array(cls, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(points)):
            raise ValueError("coordinates must be finite")
        return points

    @field_validator("columns", mode="before")
    @classmethod
    def as_column_arrays(cls, columns):
        return {
            str(name): np.asarray(values, dtype=np.float64).reshape(-1)
            for name, values in dict(columns).items()
        }

    @model_validator(mode="after")
    def check_uniform(self):
        for name, values in self.columns.items():
            if name in COORDINATE_COLUMNS:
                raise ValueError(f"column name {name!r} is reserved")
            if len(values) != len(self.points):
                raise ValueError(
                    f"column {name!r} has {len(values)} rows, expected {len(self.points)}"
                )
        return self

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def header(self) -> list[str]:
        return [*COORDINATE_COLUMNS, *self.columns]

    def __len__(self):
        return len(self.points)

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "x1":
            return self.points[:, 0]
        if name == "x2":
            return self.points[:, 1]
        return self.columns[name]

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.points, *self.columns.values()])


def export_field(table: FieldTable, destination: str | Path) -> None:
    """Write `table` as CSV, header first, 17 significant digits."""
    matrix = table.as_matrix()
    if not np.all(np.isfinite(matrix)):
        bad_row, bad_col = np.argwhere(~np.isfinite(matrix))[0]
        raise FieldTableError(
            f"refusing to export non-finite value in column "
            f"{table.header[bad_col]!r} at row {bad_row}"
        )
    try:
        with open(destination, "w", encoding="utf8", newline="") as file:
            writer = csv.writer(file)
            writer.writerow(table.header)
            for row in matrix:
                writer.writerow([format(value, ".17g") for value in row])
    except OSError as exception:
        raise FieldTableError(f"cannot write {destination}: {exception}") from exception
    logger.debug("Exported %d rows to %s", len(table), destination)


def load_reference_field(source: str | Path) -> FieldTable:
    """Read a CSV with x1, x2 and at least one value column."""
    try:
        with open(source, encoding="utf8", newline="") as file:
            rows = list(csv.reader(file))
    except OSError as exception:
        raise FieldTableError(f"cannot read {source}: {exception}") from exception

    if not rows:
        raise FieldTableError(f"{source}: empty file")
    header = [name.strip() for name in rows[0]]
    missing = [name for name in COORDINATE_COLUMNS if name not in header]
    if missing:
        raise FieldTableError(f"{source}: missing coordinate column(s) {missing}")
    value_names = [name for name in header if name not in COORDINATE_COLUMNS]
    if not value_names:
        raise FieldTableError(f"{source}: no value column")

    body = [row for row in rows[1:] if row]
    for line_number, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise FieldTableError(
                f"{source}: ragged row at line {line_number} "
                f"({len(row)} fields, expected {len(header)})"
            )
    try:
        matrix = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    except ValueError as exception:
        raise FieldTableError(f"{source}: {exception}") from exception

    index = {name: i for i, name in enumerate(header)}
    return FieldTable(
        points=matrix[:, [index["x1"], index["x2"]]],
        columns={name: matrix[:, index[name]] for name in value_names},
    )
