"""Micro-data ingestion, cell statistics and design checks.

A :class:`Dataset` is an immutable column store of ``(y, d, g, t[, cluster])``
rows. :func:`build_cells` turns it into a :class:`CellTable` holding, for every
treatment x group x period cell, the count, mean and sorted outcome sample that
all estimators consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
import pandas as pd

from .errors import DesignError, MissingCellError, SchemaError

DEFAULT_SCHEMA = {"y": "y", "d": "d", "g": "g", "t": "t", "cluster": "cluster"}


class Observation(NamedTuple):
    y: float
    d: int
    g: int
    t: int
    cluster: int | None = None


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable micro-data; row order is preserved."""

    y: np.ndarray
    d: np.ndarray
    g: np.ndarray
    t: np.ndarray
    cluster: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(self.y, float))
        object.__setattr__(self, "d", _frozen(self.d, np.int64))
        object.__setattr__(self, "g", _frozen(self.g, np.int64))
        object.__setattr__(self, "t", _frozen(self.t, np.int64))
        if self.cluster is not None:
            object.__setattr__(self, "cluster", _frozen(self.cluster, np.int64))
        n = self.y.shape[0]
        for name in ("d", "g", "t", "cluster"):
            col = getattr(self, name)
            if col is not None and col.shape != (n,):
                raise SchemaError(f"column {name!r} has shape {col.shape}, expected ({n},)")
        if not np.all(np.isfinite(self.y)):
            raise SchemaError("outcome column contains non-finite values")
        if n and self.d.min() < 0:
            raise SchemaError("treatment must be a non-negative integer")

    @classmethod
    def from_rows(cls, rows) -> "Dataset":
        rows = [Observation(*r) for r in rows]
        has_cluster = any(r.cluster is not None for r in rows)
        return cls(
            y=[r.y for r in rows],
            d=[r.d for r in rows],
            g=[r.g for r in rows],
            t=[r.t for r in rows],
            cluster=[r.cluster for r in rows] if has_cluster else None,
        )

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def n(self) -> int:
        return len(self)

    def rows(self) -> Iterator[Observation]:
        cl = self.cluster if self.cluster is not None else [None] * len(self)
        for y, d, g, t, c in zip(self.y, self.d, self.g, self.t, cl):
            yield Observation(float(y), int(d), int(g), int(t), None if c is None else int(c))

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.y[idx], self.d[idx], self.g[idx], self.t[idx],
            None if self.cluster is None else self.cluster[idx],
        )

    def subset(self, mask) -> "Dataset":
        return self.take(np.flatnonzero(mask))

    def replace(self, **columns) -> "Dataset":
        cols = {"y": self.y, "d": self.d, "g": self.g, "t": self.t, "cluster": self.cluster}
        cols.update(columns)
        return Dataset(**cols)

    def to_frame(self) -> pd.DataFrame:
        out = {"y": self.y, "d": self.d, "g": self.g, "t": self.t}
        if self.cluster is not None:
            out["cluster"] = self.cluster
        return pd.DataFrame(out)


def _parse_column(raw: pd.Series, name: str, kind: str) -> np.ndarray:
    """Parse one column, reporting the first bad row (1-based data row)."""
    stripped = raw.astype(str).str.strip()
    missing = raw.isna() | (stripped == "")
    values = pd.to_numeric(stripped.where(~missing), errors="coerce")
    bad = values.isna().to_numpy()
    if kind == "real":
        bad |= ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
    else:
        v = values.to_numpy(dtype=float, na_value=np.nan)
        with np.errstate(invalid="ignore"):
            bad |= ~np.isfinite(v) | (np.floor(v) != v)
            if kind == "level":
                bad |= v < 0
    if bad.any():
        row = int(np.flatnonzero(bad)[0]) + 1
        what = {"real": "a finite number", "int": "an integer",
                "level": "a non-negative integer"}[kind]
        shown = raw.iloc[row - 1]
        raise SchemaError(f"row {row}: column {name!r} value {shown!r} is not {what}")
    if kind == "real":
        return values.to_numpy(dtype=float)
    return values.to_numpy(dtype=float).astype(np.int64)


def load_table(path, schema: dict | None = None, sep: str = ",") -> Dataset:
    """Read delimited micro-data with a header row.

    ``schema`` maps the logical names ``y, d, g, t`` (and optionally
    ``cluster``) to column names in the file. Rows with missing values in any
    mapped column are rejected, not dropped.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file {str(path)!r} does not exist")
    mapping = dict(DEFAULT_SCHEMA)
    explicit_cluster = bool(schema and schema.get("cluster"))
    if schema:
        mapping.update({k: v for k, v in schema.items() if v})
    try:
        frame = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"input file {str(path)!r} is empty") from None
    if frame.shape[0] == 0:
        raise SchemaError(f"input file {str(path)!r} has a header but no rows")
    frame.columns = [c.strip() for c in frame.columns]
    for key in ("y", "d", "g", "t"):
        if mapping[key] not in frame.columns:
            raise SchemaError(
                f"missing column {mapping[key]!r} (mapped to {key!r})",
                hint=f"pass --{key} <column> to map it",
            )
    cluster = None
    if mapping["cluster"] in frame.columns:
        cluster = _parse_column(frame[mapping["cluster"]], mapping["cluster"], "int")
    elif explicit_cluster:
        raise SchemaError(f"missing column {mapping['cluster']!r} (mapped to 'cluster')")
    return Dataset(
        y=_parse_column(frame[mapping["y"]], mapping["y"], "real"),
        d=_parse_column(frame[mapping["d"]], mapping["d"], "level"),
        g=_parse_column(frame[mapping["g"]], mapping["g"], "int"),
        t=_parse_column(frame[mapping["t"]], mapping["t"], "int"),
        cluster=cluster,
    )


@dataclass(frozen=True, eq=False)
class Cell:
    n: int
    mean: float
    sample: np.ndarray


@dataclass(frozen=True, eq=False)
class GroupPeriod:
    n: int
    mean_y: float
    mean_d: float
    shares: dict


@dataclass(frozen=True, eq=False)
class CellTable:
    """Per-cell statistics. ``cells`` is keyed by ``(d, g, t)``, ``gt`` by ``(g, t)``."""

    n: int
    levels: tuple
    groups: tuple
    periods: tuple
    cells: dict
    gt: dict
    grid: np.ndarray = field(repr=False)

    def has_cell(self, d, g, t) -> bool:
        return (d, g, t) in self.cells

    def cell(self, d, g, t) -> Cell:
        try:
            return self.cells[(d, g, t)]
        except KeyError:
            raise MissingCellError((d, g, t)) from None

    def group_period(self, g, t) -> GroupPeriod:
        try:
            return self.gt[(g, t)]
        except KeyError:
            raise MissingCellError((g, t)) from None

    def share(self, d, g, t) -> float:
        """p_{d|gt}; zero for a level absent from a populated (g, t)."""
        return self.group_period(g, t).shares.get(d, 0.0)

    def mean_y(self, g, t) -> float:
        return self.group_period(g, t).mean_y

    def mean_d(self, g, t) -> float:
        return self.group_period(g, t).mean_d

    def levels_in(self, g, t) -> list:
        return [d for d in self.levels if (d, g, t) in self.cells]

    @property
    def support(self) -> tuple:
        return float(self.grid[0]), float(self.grid[-1])


def build_cells(ds: Dataset) -> CellTable:
    if len(ds) == 0:
        raise SchemaError("dataset is empty")
    order = np.lexsort((ds.y, ds.d, ds.t, ds.g))
    y, d, g, t = ds.y[order], ds.d[order], ds.g[order], ds.t[order]
    change = np.flatnonzero((np.diff(d) != 0) | (np.diff(g) != 0) | (np.diff(t) != 0)) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [len(y)]))
    cells = {}
    by_gt: dict = {}
    for a, b in zip(starts, stops):
        key = (int(d[a]), int(g[a]), int(t[a]))
        sample = y[a:b]
        sample.setflags(write=False)
        cells[key] = Cell(int(b - a), float(sample.mean()), sample)
        by_gt.setdefault(key[1:], []).append(key[0])
    gt = {}
    for (gg, tt), lv in by_gt.items():
        counts = {lev: cells[(lev, gg, tt)].n for lev in lv}
        n_gt = sum(counts.values())
        sum_y = sum(cells[(lev, gg, tt)].mean * counts[lev] for lev in lv)
        gt[(gg, tt)] = GroupPeriod(
            n=n_gt,
            mean_y=sum_y / n_gt,
            mean_d=sum(lev * c for lev, c in counts.items()) / n_gt,
            shares={lev: c / n_gt for lev, c in counts.items()},
        )
    grid = np.unique(ds.y)
    grid.setflags(write=False)
    return CellTable(
        n=len(ds),
        levels=tuple(int(v) for v in np.unique(ds.d)),
        groups=tuple(int(v) for v in np.unique(ds.g)),
        periods=tuple(int(v) for v in np.unique(ds.t)),
        cells=cells,
        gt=gt,
        grid=grid,
    )


def require_two_group(ct: CellTable) -> None:
    """Two-group, two-period mode needs group and period labels exactly {0, 1}."""
    if set(ct.groups) != {0, 1} or set(ct.periods) != {0, 1}:
        raise DesignError(
            f"two-group mode needs groups {{0,1}} and periods {{0,1}}; "
            f"got groups {list(ct.groups)} and periods {list(ct.periods)}",
            hint="relabel the data, restrict it to two periods, or use supergroups for many groups",
        )
    for g in (0, 1):
        for t in (0, 1):
            ct.group_period(g, t)


def shares_ratio(ct: CellTable, g: int, d: int) -> float:
    """lambda_{gd} = p_{d|g1} / p_{d|g0}; inf or nan when the period-0 share is zero."""
    num, den = ct.share(d, g, 1), ct.share(d, g, 0)
    if den > 0:
        return num / den
    return np.inf if num > 0 else np.nan


@dataclass(frozen=True)
class DesignInfo:
    lambdas: dict
    first_stage_gap: float
    control_gap: float
    did_d: float
    stable_by_level: dict
    stable_control: bool
    tol: float

    def to_dict(self) -> dict:
        return {
            "lambda": {f"g{g}_d{d}": _num(v) for (g, d), v in sorted(self.lambdas.items())},
            "first_stage_gap": self.first_stage_gap,
            "control_gap": self.control_gap,
            "did_d": self.did_d,
            "stable_by_level": {str(d): bool(v) for d, v in sorted(self.stable_by_level.items())},
            "stable_control": self.stable_control,
            "stable_tol": self.tol,
        }


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def check_design(ct: CellTable, tol: float = 0.0) -> DesignInfo:
    """Validate the two-group fuzzy design and summarise the control group.

    Raises :class:`DesignError` when the first stage fails, i.e. unless
    E(D_11) > E(D_10) and the treatment group's increase exceeds the control
    group's.
    """
    require_two_group(ct)
    gap = ct.mean_d(1, 1) - ct.mean_d(1, 0)
    control_gap = ct.mean_d(0, 1) - ct.mean_d(0, 0)
    if not (gap > 0 and gap > control_gap):
        raise DesignError(
            f"first stage fails: E(D_11)-E(D_10) = {gap:.6g}, "
            f"E(D_01)-E(D_00) = {control_gap:.6g}",
            hint="the treatment group must see the larger increase in treatment; "
                 "if treatment falls in both groups, redefine it as 1 - D (or d_max - D)",
        )
    lambdas = {(g, d): shares_ratio(ct, g, d) for g in (0, 1) for d in ct.levels}
    stable = {d: abs(ct.share(d, 0, 1) - ct.share(d, 0, 0)) <= tol for d in ct.levels}
    return DesignInfo(
        lambdas=lambdas,
        first_stage_gap=gap,
        control_gap=control_gap,
        did_d=gap - control_gap,
        stable_by_level=stable,
        stable_control=all(stable.values()),
        tol=tol,
    )


def control_is_stable(ct: CellTable, tol: float = 0.0) -> bool:
    return all(abs(ct.share(d, 0, 1) - ct.share(d, 0, 0)) <= tol for d in ct.levels)
