#!/usr/bin/env python3
"""Regenerate the bundled profile CSVs (deterministic, no RNG).

Writes src/gridmpv/data/profiles_day.csv (one day, 96 rows) and
profiles_10d.csv (ten days with varying cloudiness, 960 rows).
Load columns are kW for one household; PV and mini-PV columns are
normalized output fractions in [0, 1].
"""

import csv
import math
import os

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "gridmpv", "data")
START = "2021-06-07T00:00:00"

# day multipliers for the 10-day file: (solar, load)
DAYS = [
    (1.00, 1.00), (0.45, 1.06), (0.80, 0.96), (0.95, 1.00), (0.30, 1.10),
    (0.70, 1.02), (1.00, 0.94), (0.55, 1.00), (0.85, 1.05), (0.90, 0.98),
]


def bump(h, center, width):
    return math.exp(-0.5 * ((h - center) / width) ** 2)


def solar_window(h, center, half_width, sharpness):
    x = (h - center) / half_width
    if abs(x) >= 1.0:
        return 0.0
    return math.cos(0.5 * math.pi * x) ** sharpness


def load_a(h):
    return 0.16 + 0.62 * bump(h, 19.2, 1.8) + 0.30 * bump(h, 7.6, 1.3) + 0.10 * bump(h, 12.8, 2.0)


def load_b(h):
    return 0.14 + 0.55 * bump(h, 20.0, 2.1) + 0.22 * bump(h, 8.4, 1.6) + 0.12 * bump(h, 13.5, 2.4)


def load_c(h):
    return 0.20 + 0.70 * bump(h, 18.6, 1.7) + 0.35 * bump(h, 7.2, 1.2) + 0.15 * bump(h, 12.2, 2.2)


def pv_a(h):
    # south-facing roof, clear day
    return solar_window(h, 13.0, 4.75, 1.35)


def pv_b(h):
    # east-west split roof
    v = 0.72 * bump(h, 10.3, 1.7) + 0.62 * bump(h, 15.6, 1.8)
    return min(v, 1.0) if 5.0 < h < 21.5 else 0.0


def mpv_a(h):
    # south balcony
    return solar_window(h, 12.8, 5.1, 1.45)


def mpv_b(h):
    # east balcony with a small afternoon shoulder
    v = 0.88 * bump(h, 10.6, 1.9) + 0.34 * bump(h, 15.2, 1.6)
    return min(v, 1.0) if 5.0 < h < 21.0 else 0.0


COLUMNS = [
    ("load_a", load_a), ("load_b", load_b), ("load_c", load_c),
    ("pv_a", pv_a), ("pv_b", pv_b), ("mpv_a", mpv_a), ("mpv_b", mpv_b),
]


def timestamp(day, step):
    minutes = step * 15
    return "2021-06-%02dT%02d:%02d:00" % (7 + day, minutes // 60, minutes % 60)


def rows_for_day(day, solar_mult, load_mult):
    out = []
    for step in range(96):
        h = step * 0.25
        row = [timestamp(day, step)]
        for name, fn in COLUMNS:
            v = fn(h)
            v *= load_mult if name.startswith("load") else solar_mult
            row.append("%.6f" % min(max(v, 0.0), 1.0 if not name.startswith("load") else 10.0))
        out.append(row)
    return out


def write(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp"] + [name for name, _ in COLUMNS])
        writer.writerows(rows)
    print("wrote %s (%d rows)" % (path, len(rows)))


def main():
    write(os.path.join(OUT_DIR, "profiles_day.csv"), rows_for_day(0, 1.0, 1.0))
    all_rows = []
    for day, (solar, load) in enumerate(DAYS):
        all_rows.extend(rows_for_day(day, solar, load))
    write(os.path.join(OUT_DIR, "profiles_10d.csv"), all_rows)

    for name, fn in COLUMNS:
        daily = sum(fn(s * 0.25) for s in range(96)) * 0.25
        unit = "kWh" if name.startswith("load") else "h-equiv"
        print("%-8s %6.3f %s/day" % (name, daily, unit))


if __name__ == "__main__":
    main()
