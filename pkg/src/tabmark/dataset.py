"""Numeric tabular datasets: CSV I/O, unit-interval maps and fractional parts.

Datasets are immutable. Every transform returns a new :class:`TabularDataset`
and the source text of a cell is kept for as long as its value is unchanged,
so an untouched cell is written back byte-for-byte.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConstantColumn, EmptyDataset, ParseError

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_BELOW_ONE = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class AffineMap:
    """Min-max map ``x -> (x - lo) / (hi - lo)`` onto the unit interval."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ConstantColumn(f"degenerate map lo={self.lo} hi={self.hi}")

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def inverse(self, u):
        return self.lo + np.asarray(u, dtype=float) * (self.hi - self.lo)

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Column:
    name: str
    values: np.ndarray
    meta: AffineMap | None = None
    # Source text per cell, None where the value no longer matches its source.
    text: tuple[str | None, ...] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.text is not None and len(self.text) != len(arr):
            raise ValueError("text length does not match values")

    def __len__(self) -> int:
        return len(self.values)

    def with_values(self, values, meta: AffineMap | None | bool = False) -> "Column":
        """New column with ``values``; source text survives on unchanged cells."""
        new = np.asarray(values, dtype=float)
        text = None
        if self.text is not None:
            same = new == self.values
            text = tuple(t if s else None for t, s in zip(self.text, same))
        return Column(self.name, new, self.meta if meta is False else meta, text)


@dataclass(frozen=True)
class TabularDataset:
    """Column-major numeric matrix with optional non-numeric passthrough columns."""

    columns: tuple[Column, ...]
    passthrough: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    order: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        if not cols:
            raise EmptyDataset("dataset has no numeric columns")
        m = len(cols[0])
        if m == 0:
            raise EmptyDataset("dataset has no rows")
        for c in cols:
            if len(c) != m:
                raise ValueError(f"column {c.name!r} has {len(c)} rows, expected {m}")
            if not np.all(np.isfinite(c.values)):
                raise ParseError(f"column {c.name!r} has non-finite values", col=c.name)
        for name, cells in self.passthrough.items():
            if len(cells) != m:
                raise ValueError(f"passthrough column {name!r} has wrong length")
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names")
        if not self.order:
            object.__setattr__(self, "order", tuple(names) + tuple(self.passthrough))

    @classmethod
    def from_array(cls, data, names: Sequence[str] | None = None) -> "TabularDataset":
        arr = np.atleast_2d(np.asarray(data, dtype=float))
        if names is None:
            names = [f"c{i}" for i in range(arr.shape[1])]
        return cls(tuple(Column(n, arr[:, i]) for i, n in enumerate(names)))

    @property
    def m(self) -> int:
        return len(self.columns[0])

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(name)

    def values(self, col: int) -> np.ndarray:
        return self.columns[col].values

    def matrix(self) -> np.ndarray:
        return np.column_stack([c.values for c in self.columns])

    def replace_columns(self, updates: Mapping[int, Column]) -> "TabularDataset":
        cols = list(self.columns)
        for i, c in updates.items():
            cols[i] = c
        return replace(self, columns=tuple(cols))

    def with_values(self, col: int, values, meta: AffineMap | None | bool = False) -> "TabularDataset":
        return self.replace_columns({col: self.columns[col].with_values(values, meta)})

    def with_matrix(self, data) -> "TabularDataset":
        arr = np.asarray(data, dtype=float)
        if arr.shape != (self.m, self.n_cols):
            raise ValueError(f"shape {arr.shape} != {(self.m, self.n_cols)}")
        return self.replace_columns(
            {i: c.with_values(arr[:, i]) for i, c in enumerate(self.columns)}
        )

    def select(self, cols: Iterable[int]) -> "TabularDataset":
        """Keep only ``cols`` (numeric), in their current order; passthrough is kept."""
        keep = sorted(set(cols))
        kept = tuple(self.columns[i] for i in keep)
        names = {c.name for c in kept} | set(self.passthrough)
        order = tuple(n for n in self.order if n in names)
        return TabularDataset(kept, dict(self.passthrough), order)


def _parse_cell(token: str, row: int, col: str) -> float:
    s = token.strip()
    if not _NUMBER.match(s):
        raise ParseError(f"row {row}, column {col!r}: {token!r} is not a decimal number", row=row, col=col)
    v = float(s)
    if not math.isfinite(v):
        raise ParseError(f"row {row}, column {col!r}: {token!r} overflows", row=row, col=col)
    return v


def is_numeric_token(token: str) -> bool:
    return bool(_NUMBER.match(token.strip()))


def _read_rows(path: str | Path, header: bool) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if header:
        if not rows:
            raise EmptyDataset(f"{path}: empty file")
        names, body = rows[0], rows[1:]
    else:
        width = len(rows[0]) if rows else 0
        names, body = [f"c{i}" for i in range(width)], rows
    for i, r in enumerate(body, start=1):
        if len(r) != len(names):
            raise ParseError(f"row {i} has {len(r)} fields, expected {len(names)}", row=i)
    return names, body


def numeric_columns(path: str | Path, header: bool = True) -> list[str]:
    """Names of the columns whose every cell is a decimal number."""
    names, body = _read_rows(path, header)
    return [n for j, n in enumerate(names) if body and all(is_numeric_token(r[j]) for r in body)]


def load_csv(
    path: str | Path, header: bool = True, select: Sequence[str] | None = None
) -> TabularDataset:
    """Read a CSV file. ``select`` picks numeric columns; the rest pass through as text."""
    names, body = _read_rows(path, header)
    if not body:
        raise EmptyDataset(f"{path}: no data rows")
    chosen = list(names) if select is None else [n for n in names if n in set(select)]
    missing = set(select or ()) - set(names)
    if missing:
        raise ParseError(f"unknown columns: {sorted(missing)}")
    columns = []
    passthrough = {}
    for j, name in enumerate(names):
        cells = tuple(r[j] for r in body)
        if name in chosen:
            vals = [_parse_cell(t, i, name) for i, t in enumerate(cells, start=1)]
            columns.append(Column(name, np.array(vals), text=cells))
        else:
            passthrough[name] = cells
    if not columns:
        raise EmptyDataset(f"{path}: no numeric columns selected")
    return TabularDataset(tuple(columns), passthrough, tuple(names))


def format_value(v: float, decimals: int | None = None) -> str:
    if decimals is not None:
        return f"{v:.{decimals}f}"
    s = format(v, ".12g")
    return "0" if s == "-0" else s


def write_csv(ds: TabularDataset, path: str | Path, decimals: int | None = None) -> None:
    """Write ``ds`` in its original column order.

    Unchanged cells reuse their source text. Other cells are printed with up to
    12 significant digits, or with exactly ``decimals`` places when given.
    """
    by_name = {c.name: c for c in ds.columns}
    cells: list[Sequence[str]] = []
    for name in ds.order:
        if name in by_name:
            col = by_name[name]
            text = col.text or (None,) * len(col)
            cells.append([
                t if t is not None and decimals is None else format_value(v, decimals)
                for v, t in zip(col.values.tolist(), text)
            ])
        else:
            cells.append(ds.passthrough[name])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.order)
        w.writerows(zip(*cells))


def normalize_unit(ds: TabularDataset, col: int) -> tuple[TabularDataset, AffineMap]:
    vals = ds.values(col)
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        raise ConstantColumn(f"column {ds.columns[col].name!r} is constant; refusing to watermark it")
    amap = AffineMap(lo, hi)
    unit = np.clip(amap.forward(vals), 0.0, 1.0)
    return ds.with_values(col, unit, meta=amap), amap


def denormalize(ds: TabularDataset, col: int) -> TabularDataset:
    amap = ds.columns[col].meta
    if amap is None:
        return ds
    return ds.with_values(col, amap.inverse(ds.values(col)), meta=None)


def split_fractional(x: float) -> tuple[float, float]:
    """``(floor(x), x - floor(x))`` with the fraction always in ``[0, 1)``."""
    ip = math.floor(x)
    frac = x - ip
    if frac >= 1.0:
        frac = _BELOW_ONE
    return float(ip), frac


def fractional_parts(x) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`split_fractional`."""
    arr = np.asarray(x, dtype=float)
    ip = np.floor(arr)
    frac = np.minimum(arr - ip, _BELOW_ONE)
    return ip, frac
