"""Exact step-function algebra for empirical distribution functions.

Everything here lives on a finite grid: a :class:`StepCdf` is right-continuous,
constant between grid points and equal to ``base`` to the left of the first
one. Bound constructions produce signed, defective or non-monotone step
functions, so only instances flagged ``proper`` are guaranteed to be cdfs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FuzzyDidError, UnboundedSupportError

# slack for comparing accumulated shares such as 3 * (1/3) against 1
EPS = 1e-12


@dataclass(frozen=True, eq=False)
class StepCdf:
    grid: np.ndarray
    values: np.ndarray
    lower: float | None = None
    upper: float | None = None
    proper: bool = False
    base: float = 0.0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size == 0:
            raise FuzzyDidError("grid and values must be non-empty 1-d arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise FuzzyDidError("grid must be strictly increasing")
        if self.proper:
            if np.any(np.diff(values) < -EPS) or abs(values[-1] - 1.0) > 1e-9 or values[0] < -EPS:
                raise FuzzyDidError("a proper StepCdf must be non-decreasing from >= 0 to 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.grid, y, side="right") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], self.base)
        return out if out.ndim else float(out)

    def left_limit(self, y):
        """F(y-)."""
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.grid, y, side="left") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], self.base)
        return out if out.ndim else float(out)

    def jumps(self) -> np.ndarray:
        return np.diff(self.values, prepend=self.base)

    def inverse(self, q):
        return gen_inverse(self, q)

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values, prepend=self.base) >= -EPS))


def ecdf(sample, lower=None, upper=None) -> StepCdf:
    """Empirical cdf, F(y) = #{Y_i <= y} / n, on the distinct sample values."""
    s = np.sort(np.asarray(sample, dtype=float))
    if s.size == 0:
        raise FuzzyDidError("cannot build an empirical cdf from an empty sample")
    grid = np.unique(s)
    values = np.searchsorted(s, grid, side="right") / s.size
    return StepCdf(grid, values, lower=lower, upper=upper, proper=True)


def ecdf_at(sorted_sample: np.ndarray, y) -> np.ndarray:
    """Evaluate the empirical cdf of an already sorted sample at ``y``."""
    return np.searchsorted(sorted_sample, y, side="right") / sorted_sample.size


def gen_inverse(F: StepCdf, q):
    """inf{x : F(x) >= q} on the grid.

    q <= 0 maps to the lower support bound and q > 1 to the upper bound (the
    grid extremes when no bounds are declared). A defective ``F`` that never
    reaches q also returns the upper bound, which may be infinite.
    """
    q = np.asarray(q, dtype=float)
    lo = F.grid[0] if F.lower is None else F.lower
    hi = F.grid[-1] if F.upper is None else F.upper
    # the first index where F >= q is the first index where its running max is
    running = np.maximum.accumulate(F.values)
    idx = np.searchsorted(running, q - EPS, side="left")
    inside = np.where(idx < F.grid.size, F.grid[np.clip(idx, 0, F.grid.size - 1)], hi)
    out = np.where(q <= 0, lo, np.where(q > 1, hi, inside))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class QqTransform:
    """y -> F_target^{-1}(F_source(y))."""

    source: StepCdf
    target: StepCdf

    def __call__(self, y):
        return self.target.inverse(self.source(y))

    def out_of_support(self, y) -> int:
        y = np.asarray(y, dtype=float)
        return int(np.sum((y < self.source.grid[0]) | (y > self.source.grid[-1])))


def qq_transform(d: int, ct, g: int = 0, t0: int = 0, t1: int = 1) -> QqTransform:
    """Quantile-quantile transform from period ``t0`` to ``t1`` among group-``g`` units with D=d."""
    return QqTransform(ecdf(ct.cell(d, g, t0).sample), ecdf(ct.cell(d, g, t1).sample))


def clip01(x):
    return np.minimum(1.0, np.maximum(0.0, x))


def stieltjes_mean(F: StepCdf, allow_infinite: bool = False) -> float:
    """Integral of y dF(y) over the grid, summing signed jumps.

    Jumps located at infinite grid points are an error unless
    ``allow_infinite``, in which case their sign decides a +/-inf result.
    """
    jumps = F.jumps()
    finite = np.isfinite(F.grid)
    atoms = np.abs(jumps[~finite]) > EPS
    if atoms.any():
        if not allow_infinite:
            raise UnboundedSupportError("nonzero mass at an infinite support endpoint")
        signs = np.sign(F.grid[~finite][atoms] * jumps[~finite][atoms])
        if np.all(signs > 0):
            return np.inf
        if np.all(signs < 0):
            return -np.inf
        return np.nan
    return float(np.dot(F.grid[finite], jumps[finite]))


def envelope(F: StepCdf, mode: str) -> StepCdf:
    """Monotone envelope.

    ``"sup-below"``: y -> sup_{y' <= y} F(y') (running max, starting from ``base``).
    ``"inf-above"``: y -> inf_{y' >= y} F(y') (running min from the right).
    """
    if mode == "sup-below":
        values = np.maximum.accumulate(np.concatenate(([F.base], F.values)))[1:]
    elif mode == "inf-above":
        values = np.minimum.accumulate(F.values[::-1])[::-1]
    else:
        raise ValueError(f"unknown envelope mode {mode!r}")
    return StepCdf(F.grid, values, F.lower, F.upper, proper=False, base=F.base)


def step_integral(F: StepCdf, lo: float, hi: float) -> float:
    """Integral of F(y) dy over [lo, hi] for the step function F."""
    if hi <= lo:
        return 0.0
    inner = F.grid[(F.grid > lo) & (F.grid < hi)]
    knots = np.concatenate(([lo], inner, [hi]))
    return float(np.dot(F(knots[:-1]), np.diff(knots)))


def on_grid(F: StepCdf, grid) -> StepCdf:
    """Re-express F on a finer grid (values unchanged as a function)."""
    grid = np.asarray(grid, dtype=float)
    return StepCdf(grid, F(grid), F.lower, F.upper, proper=False, base=F.base)
