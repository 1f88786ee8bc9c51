"""Return-series ingestion and report serialization.

Input files are UTF-8 CSV with a ``date,value`` header and ISO-8601 dates.
Reports are dataclasses mixing in :class:`Report`; they serialize to flat
JSON objects (one key per metric) or to two-column ``key,value`` CSV.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import (EmptySeries, IoError, MissingFile, NonMonotoneDates,
                     ParseError)

FLOAT_DIGITS = 12


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Dated sequence of simple returns."""

    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if dates.ndim != 1 or values.shape != dates.shape:
            raise ValueError("dates and values must be 1-d and of equal length")
        if len(values) < 2:
            raise EmptySeries(f"need at least 2 observations, got {len(values)}")
        if not np.all(np.isfinite(values)):
            raise ValueError("returns must be finite")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise NonMonotoneDates("dates must be strictly increasing")
        dates.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, ReturnSeries):
            return NotImplemented
        return (np.array_equal(self.dates, other.dates)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.dates.tobytes(), self.values.tobytes()))

    def slice(self, start, stop):
        return ReturnSeries(self.dates[start:stop], self.values[start:stop])

    @classmethod
    def from_prices(cls, dates, prices):
        prices = np.asarray(prices, dtype=float)
        if np.any(prices <= 0) or not np.all(np.isfinite(prices)):
            raise ValueError("prices must be positive and finite")
        return cls(np.asarray(dates, dtype="datetime64[D]")[1:],
                   prices[1:] / prices[:-1] - 1.0)


@dataclass(frozen=True)
class SampleSplit:
    """In-sample length R and total length T with 0 < R < T."""

    in_sample_len: int
    total_len: int

    def __post_init__(self):
        if not 0 < self.in_sample_len < self.total_len:
            raise ValueError(f"need 0 < R < T, got R={self.in_sample_len}, "
                             f"T={self.total_len}")

    @property
    def out_of_sample_len(self):
        return self.total_len - self.in_sample_len


def load_returns(path, mode="returns"):
    """Read a ``date,value`` CSV into a :class:`ReturnSeries`.

    Parameters
    ----------
    path : path-like
        CSV file with header ``date,value``.
    mode : {"returns", "prices"}
        With ``"prices"`` the values are converted to simple returns
        ``P_t / P_{t-1} - 1`` and the first row is dropped.

    Any row with an unparsable field raises :class:`ParseError` carrying the
    1-based file line number; nothing is skipped silently.
    """
    if mode not in ("returns", "prices"):
        raise ValueError(f"unknown mode {mode!r}")
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    dates, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySeries(f"{path} is empty") from None
        if [h.strip().lower() for h in header] != ["date", "value"]:
            raise ParseError(1, f"expected header 'date,value', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(line, f"expected 2 fields, got {len(row)}")
            try:
                d = _dt.date.fromisoformat(row[0].strip())
            except ValueError as exc:
                raise ParseError(line, f"bad date {row[0]!r}: {exc}") from None
            try:
                v = float(row[1])
            except ValueError:
                raise ParseError(line, f"bad value {row[1]!r}") from None
            if not math.isfinite(v):
                raise ParseError(line, f"non-finite value {row[1]!r}")
            if mode == "prices" and v <= 0:
                raise ParseError(line, f"non-positive price {v}")
            if dates and d <= dates[-1]:
                raise NonMonotoneDates(f"line {line}: {d} does not follow {dates[-1]}")
            dates.append(d)
            values.append(v)
    if mode == "prices":
        if len(values) < 3:
            raise EmptySeries(f"{path}: need at least 3 prices")
        return ReturnSeries.from_prices(dates, values)
    if len(values) < 2:
        raise EmptySeries(f"{path}: need at least 2 returns")
    return ReturnSeries(np.array(dates, dtype="datetime64[D]"), values)


def write_returns(series, path):
    """Write a series as ``date,value`` CSV (full float precision)."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "value"])
            for d, v in zip(series.dates, series.values):
                w.writerow([str(d), repr(float(v))])
    except OSError as exc:
        raise IoError(str(exc)) from exc


# -- reports ---------------------------------------------------------------

def seq_field(kind="floats", **kwargs):
    """Dataclass field holding a sequence; ``kind`` is "floats" or "dates"."""
    kwargs.setdefault("default_factory", tuple)
    return field(metadata={"kind": kind}, **kwargs)


def _round(x):
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{FLOAT_DIGITS}g}")


def _kind(f):
    if "kind" in f.metadata:
        return f.metadata["kind"]
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    if "int" in t:
        return "int"
    if "str" in t:
        return "str"
    if "bool" in t:
        return "bool"
    return "float"


class Report:
    """Mixin for flat result records with deterministic serialization."""

    def to_record(self):
        rec = {}
        for f in fields(self):
            v = getattr(self, f.name)
            k = _kind(f)
            if v is None:
                rec[f.name] = None
            elif k == "floats":
                rec[f.name] = [_round(x) for x in np.asarray(v, dtype=float)]
            elif k == "dates":
                rec[f.name] = [str(d) for d in np.asarray(v, dtype="datetime64[D]")]
            elif k == "float":
                rec[f.name] = _round(v)
            elif k == "int":
                rec[f.name] = int(v)
            elif k == "bool":
                rec[f.name] = bool(v)
            else:
                rec[f.name] = str(v)
        return rec

    @classmethod
    def from_record(cls, rec):
        kwargs = {}
        for f in fields(cls):
            if f.name not in rec:
                raise KeyError(f"{cls.__name__}: missing field {f.name!r}")
            v = rec[f.name]
            k = _kind(f)
            if v is None:
                kwargs[f.name] = None
            elif k == "floats":
                kwargs[f.name] = np.array([np.nan if x is None else x for x in v],
                                          dtype=float)
            elif k == "dates":
                kwargs[f.name] = np.array(v, dtype="datetime64[D]")
            elif k == "float":
                kwargs[f.name] = float(v)
            elif k == "int":
                kwargs[f.name] = int(v)
            elif k == "bool":
                kwargs[f.name] = v if isinstance(v, bool) else str(v) == "True"
            else:
                kwargs[f.name] = str(v)
        return cls(**kwargs)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.to_record() == other.to_record()

    __hash__ = None


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, list):
        return ";".join("" if x is None else repr(x) if isinstance(x, float) else str(x)
                        for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(report, path, format="json"):
    """Serialize a :class:`Report` to ``path`` as JSON or ``key,value`` CSV.

    Floats are rounded to 12 significant digits; NaN and infinities become
    JSON ``null`` (an empty CSV cell).
    """
    rec = report.to_record()
    parent = Path(path).parent
    if not parent.is_dir():
        raise IoError(f"directory does not exist: {parent}")
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if format == "json":
                json.dump(rec, fh, indent=2)
                fh.write("\n")
            elif format == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["key", "value"])
                for k, v in rec.items():
                    w.writerow([k, _csv_cell(v)])
            else:
                raise ValueError(f"unknown format {format!r}")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_report(cls, path, format=None):
    """Inverse of :func:`write_report`; ``format`` defaults to the suffix."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    format = format or path.suffix.lstrip(".").lower()
    with open(path, newline="", encoding="utf-8") as fh:
        if format == "json":
            return cls.from_record(json.load(fh))
        if format != "csv":
            raise ValueError(f"unknown format {format!r}")
        rows = list(csv.reader(fh))[1:]
    raw = {k: v for k, v in rows}
    rec = {}
    for f in fields(cls):
        s = raw.get(f.name)
        if s is None:
            raise KeyError(f"{cls.__name__}: missing field {f.name!r}")
        k = _kind(f)
        if k in ("floats", "dates"):
            items = [x for x in s.split(";")] if s else []
            rec[f.name] = ([float(x) if x else None for x in items]
                           if k == "floats" else items)
        elif s == "":
            rec[f.name] = None
        else:
            rec[f.name] = s
    return cls.from_record(rec)


def write_table(path, columns):
    """Write a dict of equal-length columns as CSV (plot-data outputs)."""
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in zip(*cols):
                w.writerow([_csv_cell(_round(x)) if isinstance(x, (float, np.floating))
                            else str(x) for x in row])
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: [r[i] for r in body] for i, h in enumerate(header)}


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
