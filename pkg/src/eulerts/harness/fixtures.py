"""Synthetic stock-like CSV files for exercising the real-data pipeline offline."""

from __future__ import annotations

import csv
import datetime as dt

import numpy as np

from .. import rng

STOCK_COLUMNS = ("Open", "High", "Low", "Close", "Adj Close", "Volume")


def stock_like_rows(n_rows: int = 600, seed: int = 0) -> np.ndarray:
    """(n_rows, 6) daily open/high/low/close/adjusted close/volume from a GBM close.

    Volume rises with the absolute daily return, so the columns are correlated
    the way real equity data is.
    """
    g = rng.numpy_rng(seed, 0x57)
    dt_year = 1.0 / 252
    ret = 0.1 * dt_year + 0.25 * np.sqrt(dt_year) * g.normal(size=n_rows)
    close = 100.0 * np.exp(np.cumsum(ret))
    open_ = close * np.exp(-ret + 0.003 * g.normal(size=n_rows))
    spread = np.abs(0.01 * g.normal(size=n_rows)) * close
    high = np.maximum(open_, close) + spread
    low = np.minimum(open_, close) - spread * g.uniform(0.2, 1.0, size=n_rows)
    adj = close * 0.98
    volume = 1e6 * (1.0 + 40.0 * np.abs(ret)) * np.exp(0.2 * g.normal(size=n_rows))
    return np.column_stack([open_, high, low, close, adj, volume])


def write_stock_csv(path, n_rows: int = 600, seed: int = 0, missing: int = 0) -> None:
    """Write a dated stock-like CSV; ``missing`` blanks that many Close cells."""
    data = stock_like_rows(n_rows, seed)
    blanks = set()
    if missing:
        blanks = set(rng.numpy_rng(seed, 0x58).choice(n_rows, size=missing, replace=False).tolist())
    day = dt.date(2004, 8, 19)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("Date", *STOCK_COLUMNS))
        for i, row in enumerate(data):
            cells = [repr(float(v)) for v in row]
            if i in blanks:
                cells[3] = ""
            w.writerow((day.isoformat(), *cells))
            day += dt.timedelta(days=1)
