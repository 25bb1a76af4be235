"""Plain-text complex matrix records.

One record per line::

    <index> <scalar> <N> <re,im> ... (N*N pairs, row-major) ... <trailer>

For channel files ``index`` is the tone index, ``scalar`` the tone frequency in
Hz and ``trailer`` the normalized noise variance. Floats are written with 17
significant digits, which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import csv
import os
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import ChannelFileError

_FMT = "%.17g"


class ComplexRecord(NamedTuple):
    index: int
    scalar: float
    matrix: np.ndarray
    trailer: float


def format_record(rec: ComplexRecord) -> str:
    M = np.asarray(rec.matrix, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"record matrix must be square, got shape {M.shape}")
    n = M.shape[0]
    pairs = " ".join(f"{_FMT % z.real},{_FMT % z.imag}" for z in M.ravel())
    return f"{int(rec.index)} {_FMT % rec.scalar} {n} {pairs} {_FMT % rec.trailer}"


def parse_record(line: str, lineno: int = 0) -> ComplexRecord:
    fields = line.split()
    try:
        index = int(fields[0])
        scalar = float(fields[1])
        n = int(fields[2])
        if n < 1 or len(fields) != 4 + n * n:
            raise ChannelFileError(
                f"line {lineno}: expected {4 + n * n} fields for N={n}, got {len(fields)}"
            )
        flat = np.empty(n * n, dtype=complex)
        for k, pair in enumerate(fields[3:3 + n * n]):
            re, im = pair.split(",")
            flat[k] = complex(float(re), float(im))
        trailer = float(fields[-1])
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ChannelFileError):
            raise
        raise ChannelFileError(f"line {lineno}: malformed record ({exc})") from exc
    return ComplexRecord(index, scalar, flat.reshape(n, n), trailer)


def write_records(path: str | os.PathLike, records: Iterable[ComplexRecord]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for rec in records:
            fh.write(format_record(rec) + "\n")


def read_records(path: str | os.PathLike) -> Iterator[ComplexRecord]:
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield parse_record(line, lineno)


def write_csv(path: str | os.PathLike, rows: Iterable[dict], schema: str,
              fieldnames: list[str] | None = None) -> None:
    """CSV with a leading ``# schema: <tag>`` line, then a header row."""
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row.get(k, "")) for k in fieldnames})


def _csv_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def read_csv(path: str | os.PathLike) -> tuple[str, list[dict]]:
    """Inverse of :func:`write_csv`; returns ``(schema, rows)`` with string values."""
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# schema:"):
            raise ChannelFileError(f"{path}: missing schema line")
        return first.split(":", 1)[1].strip(), list(csv.DictReader(fh))
