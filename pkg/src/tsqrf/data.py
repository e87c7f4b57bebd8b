"""Raw series containers, lag embedding and price ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Series", "LagDataset", "embed", "log_returns", "load_series_csv"]


@dataclass(frozen=True)
class Series:
    """An ordered univariate series of finite real observations."""

    values: np.ndarray
    origin_label: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("series must be one-dimensional with length >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("series values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class LagDataset:
    """Supervised pairs (x_t, y_t) with x_t = (Y_{t-1}, ..., Y_{t-p}).

    Covariates are ordered most-recent-first: column j holds Y_{t-1-j}.
    ``t_index`` carries the 1-based time index of each pair in the source
    series; the first usable pair sits at t = p + 1.
    """

    x: np.ndarray
    y: np.ndarray
    p: int
    t_index: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        t_index = np.asarray(self.t_index, dtype=int)
        if x.ndim != 2 or x.shape[1] != self.p:
            raise ValueError(f"covariate rows must have exactly p={self.p} components")
        if x.shape[0] != y.size or y.size != t_index.size:
            raise ValueError("x, y and t_index must have matching lengths")
        if t_index.size > 1 and not np.all(np.diff(t_index) > 0):
            raise ValueError("t_index must be strictly increasing")
        for arr in (x, y, t_index):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t_index", t_index)

    def __len__(self) -> int:
        return int(self.y.size)


def embed(series: Series, p: int) -> LagDataset:
    """Lag-embed a series into (x, y) pairs of lag order ``p``.

    Returns exactly ``len(series) - p`` pairs; the pair at time t has
    x = (Y_{t-1}, ..., Y_{t-p}) and y = Y_t.
    """
    if p < 1:
        raise ValueError("lag order p must be a positive integer")
    values = series.values
    n = values.size
    if n <= p:
        raise ValueError(f"insufficient history for lag order {p}: need length > {p}, got {n}")
    m = n - p
    x = np.empty((m, p), dtype=float)
    for j in range(p):
        x[:, j] = values[p - 1 - j : n - 1 - j]
    y = values[p:].copy()
    t_index = np.arange(p + 1, n + 1)
    return LagDataset(x=x, y=y, p=p, t_index=t_index)


def log_returns(prices: Series) -> Series:
    """Transform a price series into log returns r_t = ln(p_t / p_{t-1})."""
    values = prices.values
    if values.size < 2:
        raise ValueError("need at least 2 prices to compute log returns")
    if np.any(values <= 0):
        bad = int(np.argmax(values <= 0))
        raise ValueError(f"prices must be strictly positive (offending index {bad})")
    returns = np.diff(np.log(values))
    label = f"{prices.origin_label}:log_returns" if prices.origin_label else "log_returns"
    return Series(values=returns, origin_label=label)


def load_series_csv(path: str, column: str, drop_missing: bool = False) -> Series:
    """Read one numeric column from a headered CSV file.

    Rows whose value in ``column`` is missing or unparseable are skipped when
    ``drop_missing`` is set (order preserved); otherwise the first bad row
    raises.
    """
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ValueError(f"column {column!r} not found in {path}")
        for rownum, row in enumerate(reader, start=1):
            raw = (row.get(column) or "").strip()
            parsed = None
            if raw:
                try:
                    parsed = float(raw)
                except ValueError:
                    parsed = None
                if parsed is not None and not math.isfinite(parsed):
                    parsed = None
            if parsed is None:
                if drop_missing:
                    continue
                raise ValueError(f"bad value {raw!r} in column {column!r} at data row {rownum} of {path}")
            values.append(parsed)
    if not values:
        raise ValueError(f"no usable values in column {column!r} of {path}")
    return Series(values=np.array(values), origin_label=f"{path}:{column}")
