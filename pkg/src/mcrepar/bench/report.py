"""CSV reports with ``#`` metadata headers."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path


def _cell(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


@dataclass
class ExperimentReport:
    columns: list
    rows: list = field(default_factory=list)
    metadata: list = field(default_factory=list)
    # columns that hold wall-clock measurements (excluded from reproducibility)
    timing_columns: tuple = ("wall_time_ns", "median_ns")

    def add(self, **row):
        self.rows.append(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for m in self.metadata:
            buf.write(f"# {m}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(r.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())
        return path


def read_csv(path):
    """(metadata lines, header, rows as dicts of strings)."""
    meta, body = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                meta.append(line[1:].strip())
            else:
                body.append(line)
    reader = csv.DictReader(body)
    return meta, reader.fieldnames, list(reader)
