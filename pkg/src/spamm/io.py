"""CSV and JSON files: sample tables, atomic writes and run manifests."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .samples import WeightedSampleSet, wrap

WEIGHT_COLUMN = "weight"


class CsvFormatError(ValueError):
    def __init__(self, path, row: int, column: int | str, message: str):
        super().__init__(f"{path}: row {row}, column {column}: {message}")
        self.row = row
        self.column = column


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_table(path, allow_missing: bool = False, skip=()) -> tuple[list[str], np.ndarray, int]:
    """Numeric CSV with optional header; empty or NaN cells allowed only if ``allow_missing``.

    Columns named in ``skip`` are not parsed and not returned.

    Returns the header (``x0, x1, ...`` when absent), the data and the file
    line number of the first data row.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        return [], np.empty((0, 0)), 1
    first = [c.strip() for c in rows[0]]
    if all(_is_number(c) for c in first if c):
        header = [f"x{i}" for i in range(len(first))]
        body, offset = rows, 1
    else:
        header, body, offset = first, rows[1:], 2
    width = len(header)
    missing = [name for name in skip if name not in header]
    if missing:
        raise CsvFormatError(path, 1, missing[0], "no such column")
    keep = [c for c, name in enumerate(header) if name not in skip]
    data = np.empty((len(body), len(keep)))
    for r, row in enumerate(body):
        if len(row) != width:
            raise CsvFormatError(path, r + offset, len(row), f"expected {width} columns, found {len(row)}")
        for j, c in enumerate(keep):
            cell = row[c].strip()
            if cell == "" or cell.lower() == "nan":
                if not allow_missing:
                    raise CsvFormatError(path, r + offset, header[c], "missing value")
                data[r, j] = math.nan
                continue
            try:
                data[r, j] = float(cell)
            except ValueError:
                raise CsvFormatError(path, r + offset, header[c], f"not a number: {cell!r}") from None
            if not math.isfinite(data[r, j]):
                raise CsvFormatError(path, r + offset, header[c], f"non-finite value {cell!r}")
    return [header[c] for c in keep], data, offset


def read_samples(path, wrap_values: bool = False) -> tuple[WeightedSampleSet, list[str]]:
    """Torus samples from CSV; a column named ``weight`` holds sample weights."""
    header, data, first = read_table(path)
    if data.size == 0 and not header:
        raise CsvFormatError(path, 1, 0, "file is empty")
    weights = None
    if WEIGHT_COLUMN in header:
        j = header.index(WEIGHT_COLUMN)
        weights = data[:, j]
        data = np.delete(data, j, axis=1)
        header = [h for h in header if h != WEIGHT_COLUMN]
        if np.any(weights < 0):
            r = int(np.flatnonzero(weights < 0)[0])
            raise CsvFormatError(path, r + first, WEIGHT_COLUMN, "negative weight")
    if wrap_values:
        data = wrap(data)
    else:
        bad = np.argwhere((data < 0.0) | (data >= 1.0))
        if bad.size:
            r, c = bad[0]
            raise CsvFormatError(path, int(r) + first, header[c],
                                 f"value {data[r, c]!r} outside [0, 1); pass --wrap to reduce modulo 1")
    return WeightedSampleSet.from_raw(data.reshape(-1, len(header)), weights), header


def format_samples(samples: WeightedSampleSet, header=None, with_weights: bool = False) -> str:
    """CSV text with shortest round-trip float formatting."""
    header = list(header) if header is not None else [f"x{i}" for i in range(samples.d)]
    if with_weights:
        header = header + [WEIGHT_COLUMN]
    lines = [",".join(header)]
    for i in range(samples.n):
        vals = [repr(float(v)) for v in samples.points[i]]
        if with_weights:
            vals.append(repr(float(samples.weights[i])))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def write_samples(path, samples: WeightedSampleSet, header=None, with_weights: bool = False) -> None:
    atomic_write_text(path, format_samples(samples, header, with_weights))


def manifest_path(out) -> Path:
    return Path(str(out) + ".manifest.json")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    duration_s: float = 0.0
    version: str = ""
    extra: dict = field(default_factory=dict)
    created: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))

    def write(self, out) -> Path:
        path = manifest_path(out)
        write_json(path, asdict(self))
        return path
