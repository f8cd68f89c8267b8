"""CSV ingestion: min-max scaling, sliding windows, rebasing to a common start."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..sdesim import PathBatch, TimeGrid

REBASE_X0 = 0.2


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    path: str
    columns: tuple[str, ...] | None = None
    window: int = 30
    stride: int = 1
    maturity: float = 1.0
    x0: float = REBASE_X0

    def __post_init__(self):
        if self.window < 2:
            raise DatasetError(f"window must be >= 2, got {self.window}")
        if self.stride < 1:
            raise DatasetError(f"stride must be >= 1, got {self.stride}")


@dataclass
class LoadedDataset:
    """Windows as a PathBatch plus everything needed to undo the transform."""

    paths: PathBatch
    columns: list[str]
    col_min: np.ndarray
    col_max: np.ndarray
    offsets: np.ndarray  # (W, d) scaled first value of each window
    starts: np.ndarray  # (W,) row index of each window start
    dropped: int = 0
    constant_columns: list[str] = field(default_factory=list)
    x0: float = REBASE_X0

    def inverse_transform(self, values: np.ndarray | None = None, offsets: np.ndarray | None = None) -> np.ndarray:
        """Map rebased windows back to raw units (defaults: the loaded windows)."""
        v = self.paths.values if values is None else np.asarray(values, dtype=np.float64)
        off = self.offsets if offsets is None else offsets
        span = self.col_max - self.col_min
        scaled = v - self.x0 + off[:, None, :]
        return scaled * span + self.col_min


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DatasetError(f"{path}: empty file")
    return [h.strip() for h in rows[0]], rows[1:]


def _parse(cell: str) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() in ("nan", "na", "null"):
        return math.nan
    return float(cell)


def load_csv_dataset(spec: DatasetSpec) -> LoadedDataset:
    header, rows = _read_csv(spec.path)
    if spec.columns:
        missing = [c for c in spec.columns if c not in header]
        if missing:
            raise DatasetError(f"{spec.path}: column(s) not found: {', '.join(missing)}")
        names = list(spec.columns)
    else:
        names = []
        for j, name in enumerate(header):
            try:
                [_parse(r[j]) for r in rows if j < len(r)]
            except ValueError:
                continue
            names.append(name)
        if not names:
            raise DatasetError(f"{spec.path}: no numeric columns")
    idx = [header.index(c) for c in names]
    data = np.empty((len(rows), len(idx)))
    for i, r in enumerate(rows):
        for k, j in enumerate(idx):
            try:
                data[i, k] = _parse(r[j]) if j < len(r) else math.nan
            except ValueError:
                raise DatasetError(f"{spec.path}: non-numeric value {r[j]!r} in column {names[k]!r}, "
                                   f"row {i + 2}") from None
    n_rows = data.shape[0]
    if n_rows < spec.window:
        raise DatasetError(f"{spec.path}: {n_rows} rows < window {spec.window}")
    with np.errstate(all="ignore"):
        lo = np.nanmin(data, axis=0)
        hi = np.nanmax(data, axis=0)
    if np.any(np.isnan(lo)):
        bad = [names[k] for k in np.flatnonzero(np.isnan(lo))]
        raise DatasetError(f"{spec.path}: column(s) with no values: {', '.join(bad)}")
    span = hi - lo
    constant = [names[k] for k in np.flatnonzero(span == 0)]
    span = np.where(span == 0, 1.0, span)
    scaled = (data - lo) / span
    starts = np.arange(0, n_rows - spec.window + 1, spec.stride)
    windows = np.stack([scaled[s:s + spec.window] for s in starts])
    ok = ~np.isnan(windows).any(axis=(1, 2))
    dropped = int((~ok).sum())
    if not ok.any():
        raise DatasetError(f"{spec.path}: all {len(starts)} windows contain missing values")
    windows, starts = windows[ok], starts[ok]
    offsets = windows[:, 0, :].copy()
    rebased = windows - offsets[:, None, :] + spec.x0
    grid = TimeGrid(0.0, spec.maturity, spec.window - 1)
    return LoadedDataset(PathBatch(rebased, grid), names, lo, lo + span, offsets, starts, dropped, constant, spec.x0)


def window_count(rows: int, window: int, stride: int) -> int:
    return 0 if rows < window else (rows - window) // stride + 1
