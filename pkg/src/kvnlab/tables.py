"""Tiny CSV helpers: '.' decimal separator, LF endings, round-trip float formatting."""
import csv
from pathlib import Path

import numpy as np


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, columns):
    """Write equal-length ``columns`` under ``header``; returns the path."""
    path = Path(path)
    columns = [np.asarray(c) if not isinstance(c, list) else c for c in columns]
    n = len(columns[0]) if columns else 0
    if any(len(c) != n for c in columns):
        raise ValueError("CSV columns have unequal lengths")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([_fmt(c[i]) for c in columns])
    return path


def write_rows(path, header, rows):
    return write_csv(path, header, [list(col) for col in zip(*rows)] if rows else [[] for _ in header])


def read_csv(path):
    """Return ``(header, [float column arrays])``."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [list(map(float, row)) for row in r]
    cols = [np.array(c) for c in zip(*rows)] if rows else [np.array([]) for _ in header]
    return header, cols
