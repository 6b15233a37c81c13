"""File helpers: atomic writes and the wide per-day CSV layout."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it over."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def wide_header(n_bus: int, horizon: int) -> list:
    return ["day"] + [f"b{i}_t{t}" for i in range(n_bus) for t in range(horizon)]


def write_wide_csv(path, days, rows, n_bus: int, horizon: int) -> None:
    """One row per day; columns ordered bus-major then period."""
    rows = np.asarray(rows, dtype=float).reshape(len(days), n_bus * horizon)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(wide_header(n_bus, horizon))
    for d, r in zip(days, rows):
        w.writerow([d] + [repr(float(v)) for v in r])
    atomic_write_text(path, buf.getvalue())


def read_wide_csv(path, n_cols: int | None = None):
    """Return ``(days, matrix)``; malformed rows raise ``ValueError`` naming the line."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if not header or header[0].strip() != "day":
            raise ValueError(f"{path}: first column must be 'day'")
        width = len(header) - 1
        if n_cols is not None and width != n_cols:
            raise ValueError(f"{path}: expected {n_cols} value columns, found {width}")
        days, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise ValueError(f"{path}: row {lineno} has {len(row) - 1} values, expected {width}")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}: row {lineno}: {exc}") from None
            days.append(row[0])
    return days, np.asarray(rows, dtype=float).reshape(len(rows), width)
