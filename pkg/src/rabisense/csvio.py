"""CSV helpers shared by every dataset writer."""

import csv
from typing import Iterable, Sequence, TextIO


def format_float(v: float) -> str:
    """17 significant digits in scientific notation, so values round-trip exactly."""
    return format(float(v), ".16e")


def format_cell(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    return format_float(v)


def write_table(stream: TextIO, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(v) for v in row])
