"""Reading return series and writing lossless CSV/JSON outputs."""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .core import DomainError, ReturnSeries

FLOAT_FMT = "%.17g"


def _fmt(v):
    return FLOAT_FMT % v


def _date_keys(dates):
    # numeric labels (e.g. 1..n) compare as numbers, anything else as text
    try:
        return [float(d) for d in dates]
    except ValueError:
        return list(dates)


def ingest(path, kind="returns"):
    """Read a ``date,value`` CSV with a header row.

    ``kind="prices"`` converts prices to percentage log returns
    ``100 * (ln p_t - ln p_{t-1})``; ``kind="returns"`` passes values through.
    Rows with non-numeric values are rejected with their line number.
    Duplicate or decreasing dates only produce a warning.
    """
    if kind not in ("returns", "prices"):
        raise DomainError(f"kind must be 'returns' or 'prices', got {kind!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise DomainError(f"{path}: empty file")
    header = [c.strip().lower() for c in rows[0][1]]
    if len(header) < 2 or header[:2] != ["date", "value"]:
        raise DomainError(f"{path}: expected header 'date,value', got {','.join(rows[0][1])!r}")
    dates, values = [], []
    for line, r in rows[1:]:
        if len(r) < 2:
            raise DomainError(f"{path}: line {line}: expected two columns")
        try:
            v = float(r[1])
        except ValueError:
            raise DomainError(f"{path}: line {line}: non-numeric value {r[1]!r}") from None
        if not math.isfinite(v):
            raise DomainError(f"{path}: line {line}: non-finite value {r[1]!r}")
        dates.append(r[0].strip())
        values.append(v)
    if not values:
        raise DomainError(f"{path}: no data rows")
    keys = _date_keys(dates)
    if any(b <= a for a, b in zip(keys, keys[1:])):
        warnings.warn(f"{path}: dates are not strictly increasing", RuntimeWarning, stacklevel=2)
    v = np.array(values)
    if kind == "prices":
        if v.size < 2:
            raise DomainError(f"{path}: prices need at least two rows")
        if np.any(v <= 0.0):
            bad = int(np.flatnonzero(v <= 0.0)[0])
            raise DomainError(f"{path}: line {rows[bad + 1][0]}: price must be positive")
        return ReturnSeries(100.0 * np.diff(np.log(v)), tuple(dates[1:]))
    return ReturnSeries(v, tuple(dates))


def write_series(path, series):
    """Write ``date,value``; dates default to ``1..n``."""
    labels = series.labels or tuple(str(i + 1) for i in range(len(series)))
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "value"])
        for d, v in zip(labels, series.values):
            w.writerow([d, _fmt(v)])


def write_forecasts(path, run):
    """Write ``date,y,q_hat,hit`` for a forecast run; failed origins have ``nan``."""
    labels = run.labels or tuple(str(int(i) + 1) for i in run.origins)
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "y", "q_hat", "hit"])
        for d, y, q, h in zip(labels, run.y, run.forecasts, run.hits):
            w.writerow([d, _fmt(y), _fmt(q), int(bool(h))])


def read_forecasts(path):
    """Read a forecasts CSV back into ``(dates, y, q_hat, hits)``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"date", "y", "q_hat", "hit"} - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"{path}: missing columns {sorted(missing)}")
        dates, y, q, h = [], [], [], []
        for line, r in enumerate(reader, start=2):
            try:
                y.append(float(r["y"]))
                q.append(float(r["q_hat"]))
                h.append(int(r["hit"]))
            except ValueError:
                raise DomainError(f"{path}: line {line}: malformed row") from None
            dates.append(r["date"])
    if not dates:
        raise DomainError(f"{path}: no data rows")
    return dates, np.array(y), np.array(q), np.array(h, dtype=bool)


def write_table(path, header, rows):
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(c) if isinstance(c, float) else c for c in r])


def to_jsonable(obj):
    """Convert dataclasses, numpy arrays and scalars to JSON-ready values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj):
    # repr-based float output round-trips exactly
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    with _open_out(path) as fh:
        fh.write(text + "\n")


def _open_out(path):
    if path is None or str(path) == "-":
        return contextlib.nullcontext(sys.stdout)
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True)
    return p.open("w", newline="", encoding="utf-8")
