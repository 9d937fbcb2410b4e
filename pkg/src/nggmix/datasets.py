"""Bundled example data and CSV ingestion of censored observations.

Two file layouts are understood.  A file whose header is ``left,right``
carries one bound pair per row: equal bounds mean an exact value, an
empty left cell a left-censored point (the value is at most ``right``),
an empty right cell a right-censored point, and ``left < right`` an
interval.  A single-column file (optional header) carries exact values
only.
"""

from __future__ import annotations

import csv
import io
from importlib import resources

from .observations import Observation

__all__ = [
    "read_observation_csv",
    "serialize_observations",
    "load_acidity",
    "load_ecotox_sample",
]


def _parse_cell(cell: str, line: int) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"line {line}: non-numeric cell {cell!r}") from None
    # inf/nan parse as floats but are not observable values
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(f"line {line}: non-numeric cell {cell!r}")
    return value


def _read_rows(text: str) -> list[Observation]:
    rows = list(csv.reader(io.StringIO(text)))
    # line numbers are 1-based positions in the file; blank lines are
    # skipped, but a row of empty cells (",") is a malformed record
    numbered = [
        (i + 1, row)
        for i, row in enumerate(rows)
        if len(row) > 1 or (row and row[0].strip())
    ]
    if not numbered:
        raise ValueError("no observations: the file is empty")

    first_line, first = numbered[0]
    header = [c.strip().lower() for c in first]
    if header == ["left", "right"]:
        two_column = True
        numbered = numbered[1:]
    elif len(first) == 1:
        two_column = False
        if _is_header(first[0]):
            numbered = numbered[1:]
    else:
        raise ValueError(
            f"line {first_line}: expected the header 'left,right' or a "
            "single column of values"
        )
    if not numbered:
        raise ValueError("no observations: the file holds only a header")

    observations = []
    for line, row in numbered:
        if len(row) != (2 if two_column else 1):
            raise ValueError(
                f"line {line}: expected {2 if two_column else 1} cell(s), got {len(row)}"
            )
        if two_column:
            left = _parse_cell(row[0], line)
            right = _parse_cell(row[1], line)
            try:
                observations.append(Observation.from_bounds(left, right))
            except ValueError as err:
                raise ValueError(f"line {line}: {err}") from None
        else:
            value = _parse_cell(row[0], line)
            observations.append(Observation.exact(value))
    return observations


def _is_header(cell: str) -> bool:
    try:
        float(cell.strip())
    except ValueError:
        return True
    return False


def read_observation_csv(path) -> list[Observation]:
    """Parse a CSV file of observations; see the module docstring."""
    with open(path, newline="") as fh:
        return _read_rows(fh.read())


def serialize_observations(observations, path) -> None:
    """Write observations as a ``left,right`` CSV.

    Bounds are written with shortest round-trip float formatting, so
    re-reading reproduces the original values bit for bit.
    """
    if not observations:
        raise ValueError("nothing to serialize")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["left", "right"])
        for obs in observations:
            if obs.kind == "exact":
                writer.writerow([repr(obs.value), repr(obs.value)])
            else:
                left = "" if obs.left is None else repr(obs.left)
                right = "" if obs.right is None else repr(obs.right)
                writer.writerow([left, right])


def _load_bundled(name: str) -> list[Observation]:
    text = resources.files("nggmix.data").joinpath(name).read_text()
    return _read_rows(text)


def load_acidity() -> list[Observation]:
    """155 exact measurements with two well separated modes.

    An acidity-index style sample for demonstrating density estimation
    and model comparison on uncensored data.
    """
    return _load_bundled("acidity_sample.csv")


def load_ecotox_sample() -> list[Observation]:
    """57 species tolerances on a log scale, about 40 percent censored.

    A species-sensitivity style sample mixing exact, left-, right- and
    interval-censored rows, for demonstrating censored density estimation
    and low quantile (hazardous concentration) inference.
    """
    return _load_bundled("ecotox_sample.csv")
