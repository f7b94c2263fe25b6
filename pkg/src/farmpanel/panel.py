"""Panel containers, CSV ingestion, and lag-matrix construction.

The internal layout is series-major: ``values`` is (n, T), one row per
series.  CSV files in the wild are usually time-major, so ingestion takes
an explicit orientation flag instead of guessing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class PanelError(ValueError):
    """Raised on malformed panel input (bad CSV cell, duplicate id, ...)."""


@dataclass(frozen=True)
class PanelData:
    """An n-by-T panel of observations with series and time labels.

    Invariants enforced at construction: n >= 1, T >= 2, every entry
    finite, series ids unique, time ids unique (and strictly increasing
    when they parse as numbers).
    """

    values: np.ndarray            # (n, T)
    series_ids: tuple[str, ...]
    time_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "series_ids", tuple(str(s) for s in self.series_ids))
        object.__setattr__(self, "time_ids", tuple(str(t) for t in self.time_ids))
        n, t = self.shape
        if n < 1 or t < 2:
            raise PanelError(f"panel must be at least 1 x 2, got {n} x {t}")
        if len(self.series_ids) != n:
            raise PanelError(f"{len(self.series_ids)} series ids for {n} rows")
        if len(self.time_ids) != t:
            raise PanelError(f"{len(self.time_ids)} time ids for {t} columns")
        if len(set(self.series_ids)) != n:
            dup = _first_duplicate(self.series_ids)
            raise PanelError(f"duplicate series id {dup!r}")
        if len(set(self.time_ids)) != t:
            dup = _first_duplicate(self.time_ids)
            raise PanelError(f"duplicate time id {dup!r}")
        _check_time_order(self.time_ids)
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise PanelError(
                f"non-finite value at series {self.series_ids[i]!r}, "
                f"time {self.time_ids[j]!r}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    def series(self, sid: str) -> np.ndarray:
        return self.values[self.series_ids.index(sid)]


@dataclass(frozen=True)
class LaggedDesign:
    """Stacked lag regressors for one-step forecasting.

    Row t (zero-based, t = p .. T-1 of the source panel) holds the values
    of every series at times t-1, ..., t-p; ``column_map[c]`` gives the
    (series index, lag) behind column c.
    """

    regressors: np.ndarray                     # (T - p, n * p)
    targets_offset: int                        # = p
    column_map: tuple[tuple[int, int], ...] = field(repr=False)

    def __post_init__(self):
        reg = np.asarray(self.regressors, dtype=float)
        reg.setflags(write=False)
        object.__setattr__(self, "regressors", reg)
        object.__setattr__(self, "column_map", tuple(self.column_map))
        if reg.shape[1] != len(self.column_map):
            raise PanelError("column_map does not cover all columns")


def _first_duplicate(items) -> str:
    seen = set()
    for x in items:
        if x in seen:
            return x
        seen.add(x)
    return ""


def _check_time_order(time_ids) -> None:
    # Numeric time ids must be strictly increasing; free-form labels keep
    # file order (their position is the time order).
    try:
        numeric = [float(t) for t in time_ids]
    except ValueError:
        return
    diffs = np.diff(numeric)
    if len(diffs) and not np.all(diffs > 0):
        j = int(np.argmax(diffs <= 0))
        raise PanelError(
            f"time ids not strictly increasing at position {j + 1} "
            f"({time_ids[j]!r} -> {time_ids[j + 1]!r})"
        )


def load_panel_csv(path, orientation: str = "rows-are-time") -> PanelData:
    """Read a panel from CSV and normalize to the internal (n, T) layout.

    The first row is a header, the first column an index.  With
    ``rows-are-time`` the header carries series ids and the index time
    ids; ``rows-are-series`` is the transpose.  Every data cell must
    parse as a finite real; offending cells are reported by coordinate.
    """
    if orientation not in ("rows-are-time", "rows-are-series"):
        raise PanelError(f"unknown orientation {orientation!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise PanelError(f"{path}: need a header row plus at least one data row")
    header = [c.strip() for c in rows[0][1:]]
    width = len(rows[0])
    index: list[str] = []
    data = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise PanelError(f"{path}: row {r} has {len(row)} cells, expected {width}")
        index.append(row[0].strip())
        for c, cell in enumerate(row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise PanelError(
                    f"{path}: non-numeric cell at row {r}, column {c + 2}: {cell!r}"
                ) from None
            if not np.isfinite(v):
                raise PanelError(
                    f"{path}: non-finite cell at row {r}, column {c + 2}: {cell!r}"
                )
            data[r - 2, c] = v
    if orientation == "rows-are-time":
        return PanelData(values=data.T, series_ids=header, time_ids=index)
    return PanelData(values=data, series_ids=index, time_ids=header)


def save_panel_csv(panel: PanelData, path, orientation: str = "rows-are-time") -> None:
    """Write a panel as CSV with 17 significant digits (round-trip safe)."""
    if orientation not in ("rows-are-time", "rows-are-series"):
        raise PanelError(f"unknown orientation {orientation!r}")
    if orientation == "rows-are-time":
        header, index, data = panel.series_ids, panel.time_ids, panel.values.T
    else:
        header, index, data = panel.time_ids, panel.series_ids, panel.values
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *header])
        for label, row in zip(index, data):
            writer.writerow([label, *(format(v, ".17g") for v in row)])


def build_lag_matrix(panel: PanelData, p: int) -> LaggedDesign:
    """Stack p lags of every series into a (T - p) x (n * p) design.

    Row for target time t holds, per series i, the values at
    t-1, ..., t-p; combined with targets ``panel.values[:, p:]`` this is
    the standard one-step design.  Columns are grouped lag-major within
    series: (i, 1), (i, 2), ..., (i, p).
    """
    n, t_len = panel.shape
    if p < 1:
        raise PanelError(f"lag order must be positive, got {p}")
    if p >= t_len:
        raise PanelError(f"lag order {p} must be smaller than T = {t_len}")
    blocks = []
    column_map = []
    for i in range(n):
        for lag in range(1, p + 1):
            blocks.append(panel.values[i, p - lag:t_len - lag])
            column_map.append((i, lag))
    regressors = np.column_stack(blocks)
    return LaggedDesign(regressors=regressors, targets_offset=p, column_map=tuple(column_map))
