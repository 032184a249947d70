"""Time-series profile files: 15-min CSV with one timestamp column.

First column is an ISO-8601 timestamp; every other column is a named series
referenced by device definitions. Load columns carry kW, PV and mini-PV
columns carry normalized output in [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime

import numpy as np


class ProfileError(Exception):
    pass


@dataclass
class ProfileSet:
    timestamps: list
    minutes_of_day: list
    columns: dict  # name -> np.ndarray
    dt_minutes: int

    @property
    def n_rows(self) -> int:
        return len(self.timestamps)

    def has_column(self, name: str) -> bool:
        return name in self.columns

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise ProfileError("profile column %r not found" % name) from None


def load_profiles(path: str) -> ProfileSet:
    """Read and sanity-check one profile CSV."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ProfileError("%s: need a timestamp column plus at least one series" % path)
        names = header[1:]
        stamps = []
        data = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ProfileError("%s:%d: expected %d fields, got %d" % (path, lineno, len(header), len(row)))
            stamps.append(row[0])
            for i, cell in enumerate(row[1:]):
                try:
                    data[i].append(float(cell))
                except ValueError:
                    raise ProfileError("%s:%d: non-numeric value %r in column %s" % (path, lineno, cell, names[i])) from None

    if not stamps:
        raise ProfileError("%s: no data rows" % path)

    parsed = []
    for s in stamps:
        try:
            parsed.append(datetime.fromisoformat(s))
        except ValueError:
            raise ProfileError("%s: bad ISO-8601 timestamp %r" % (path, s)) from None

    if len(parsed) > 1:
        step = (parsed[1] - parsed[0]).total_seconds()
        if step <= 0:
            raise ProfileError("%s: timestamps must increase" % path)
        for a, b in zip(parsed, parsed[1:]):
            if (b - a).total_seconds() != step:
                raise ProfileError("%s: non-uniform timestamp spacing near %s" % (path, b.isoformat()))
        dt_minutes = int(round(step / 60.0))
    else:
        dt_minutes = 15

    minutes = [dt.hour * 60 + dt.minute for dt in parsed]
    columns = {name: np.asarray(vals, dtype=float) for name, vals in zip(names, data)}
    return ProfileSet(timestamps=stamps, minutes_of_day=minutes, columns=columns, dt_minutes=dt_minutes)
