"""Influence-function standard errors and the i.i.d. / cluster bootstrap.

Influence vectors are returned in the row order of the dataset. The
plug-in versions are demeaned within each cell, so their sample mean is zero
up to rounding. Analytic variance for the CIC estimators needs densities;
these come from Gaussian kernel estimates with a Silverman bandwidth and are
the only smoothed quantities in the package.
"""
from __future__ import annotations

import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde, norm

from .dataset import CellTable, Dataset, build_cells, require_two_group
from .empirical import ecdf, ecdf_at, qq_transform
from .errors import BootstrapError, DensityFloorError, DesignError, FuzzyDidError
from .estimators import (
    Estimate, _gap_or_raise, _require_binary, _require_stable, did_of, switcher_cdf,
    tc_deltas, wald_did, wald_tc,
)


@dataclass(frozen=True, eq=False)
class InfluenceVector:
    kind: str
    values: np.ndarray = field(repr=False)
    q: float | None = None

    @property
    def n(self) -> int:
        return self.values.size

    def se(self, cluster=None) -> float:
        """sd(psi)/sqrt(n), or the cluster-robust version summing psi within clusters."""
        psi = self.values
        if cluster is None:
            return float(np.std(psi) / np.sqrt(psi.size))
        _, inv = np.unique(cluster, return_inverse=True)
        sums = np.bincount(inv, weights=psi - psi.mean())
        return float(np.sqrt(np.sum(sums ** 2)) / psi.size)


def _masks(ds: Dataset) -> dict:
    return {(g, t): (ds.g == g) & (ds.t == t) for g in (0, 1) for t in (0, 1)}


def _two_group(ds: Dataset, ct: CellTable | None) -> CellTable:
    ct = build_cells(ds) if ct is None else ct
    require_two_group(ct)
    return ct


def influence_did(ds: Dataset, ct: CellTable | None = None, delta: float | None = None) -> InfluenceVector:
    ct = _two_group(ds, ct)
    did_d = did_of(ct, "d")
    if delta is None:
        delta = wald_did(ct).point
    n = len(ds)
    eps = ds.y - delta * ds.d
    psi = np.zeros(n)
    for (g, t), m in _masks(ds).items():
        sign = 1.0 if g == t else -1.0
        psi[m] = sign * (eps[m] - eps[m].mean()) / (m.sum() / n)
    return InfluenceVector("did", psi / did_d)


def influence_tc(ds: Dataset, ct: CellTable | None = None, delta: float | None = None,
                 stable_tol: float = 0.0) -> InfluenceVector:
    ct = _two_group(ds, ct)
    gap = _gap_or_raise(ct)
    _require_stable(ct, stable_tol, "Wald-TC")
    if delta is None:
        delta = wald_tc(ct, stable_tol).point
    deltas = tc_deltas(ct)
    n = len(ds)
    M = _masks(ds)
    eps = ds.y - delta * ds.d
    psi = np.zeros(n)
    m = M[1, 1]
    psi[m] = (eps[m] - eps[m].mean()) / (m.sum() / n)
    m = M[1, 0]
    shifted = eps[m] + np.array([deltas.get(int(d), 0.0) for d in ds.d[m]])
    psi[m] = -(shifted - shifted.mean()) / (m.sum() / n)
    for d, _ in deltas.items():
        w = ct.share(d, 1, 0)
        for t, sign in ((1, -1.0), (0, 1.0)):
            c = M[0, t] & (ds.d == d)
            psi[c] += sign * w * (ds.y[c] - ds.y[c].mean()) / (c.sum() / n)
    return InfluenceVector("tc", psi / gap)


# ---------------------------------------------------------------- densities

def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    iqr = np.subtract(*np.percentile(x, [75, 25])) if x.size > 1 else 0.0
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** -0.2


def kde(sample, points, floor: float) -> np.ndarray:
    """Gaussian kernel density with Silverman bandwidth; degenerate samples give ``floor``."""
    sample = np.asarray(sample, dtype=float)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    h = silverman_bandwidth(sample)
    if sample.size < 2 or not h > 0:
        return np.full(points.shape, floor)
    est = gaussian_kde(sample, bw_method=h / sample.std(ddof=1))
    return est(points)


def density_floor(ct: CellTable) -> float:
    lo, hi = ct.support
    return 1e-6 / max(hi - lo, 1e-300)


class _CicLevel:
    """Per-level ingredients of the CIC linearisation, evaluated on the pooled grid."""

    def __init__(self, ds: Dataset, ct: CellTable, d: int, floor: float):
        n = len(ds)
        self.d = d
        self.grid = grid = ct.grid
        self.p11, self.p10 = ct.share(d, 1, 1), ct.share(d, 1, 0)
        self.B = self.p11 - self.p10
        self.n11 = ct.group_period(1, 1).n / n
        self.n10 = ct.group_period(1, 0).n / n
        self.F11 = ecdf_at(ct.cell(d, 1, 1).sample, grid) if self.p11 > 0 else np.zeros(grid.size)
        self.K = np.zeros(grid.size)
        self.active = self.p10 > 0
        self.Q = None
        if self.active:
            qq = qq_transform(d, ct)
            self.Q = qq
            self.Q10 = np.sort(qq(ct.cell(d, 1, 0).sample))
            self.K = ecdf_at(self.Q10, grid)
            c00, c01 = ct.cell(d, 0, 0), ct.cell(d, 0, 1)
            self.F01 = ecdf_at(c01.sample, grid)
            self.FQ00 = ecdf_at(np.sort(qq(c00.sample)), grid)
            self.n00, self.n01 = c00.n / n, c01.n / n
            F00 = ecdf(c00.sample)
            self.F00 = F00
            self.samples = (ct.cell(d, 1, 0).sample, c00.sample)
            self.floor = floor
            x = F00.inverse(self.F01)
            self.Hp = self._hprime(x)
        self.FS = (self.p11 * self.F11 - self.p10 * self.K) / self.B

    def _hprime(self, x):
        ux, inv = np.unique(x, return_inverse=True)
        f10 = kde(self.samples[0], ux, self.floor)
        f00 = np.maximum(kde(self.samples[1], ux, self.floor), self.floor)
        return (f10 / f00)[inv]


def _tail(grid: np.ndarray, w: np.ndarray) -> np.ndarray:
    """tail[k] = sum_{j >= k} w_j (g_{j+1} - g_j); tail at the last grid point is 0."""
    pieces = w[:-1] * np.diff(grid)
    return np.concatenate((np.cumsum(pieces[::-1])[::-1], [0.0]))


def _integral(grid, f) -> float:
    return float(np.dot(f[:-1], np.diff(grid)))


def _psi_integrated(ds: Dataset, lev: _CicLevel) -> np.ndarray:
    """Per-observation integral over y of the influence function of F_CIC,d(y)."""
    n = len(ds)
    grid = lev.grid
    top = grid[-1]
    is_d = ds.d == lev.d
    psi = np.zeros(n)
    S = _integral(grid, lev.FS)
    m = (ds.g == 1) & (ds.t == 1)
    ind = is_d[m].astype(float)
    psi[m] = (ind * (top - ds.y[m]) - lev.p11 * _integral(grid, lev.F11)
              - (ind - lev.p11) * S) / lev.n11
    m = (ds.g == 1) & (ds.t == 0)
    ind = is_d[m].astype(float)
    reach = np.zeros(m.sum())
    if lev.active:
        sel = is_d[m]
        reach[sel] = top - lev.Q(ds.y[m][sel])
    psi[m] = -(reach - lev.p10 * _integral(grid, lev.K) - (ind - lev.p10) * S) / lev.n10
    if lev.active:
        tail = _tail(grid, lev.Hp)
        c = (ds.g == 0) & (ds.t == 1) & is_d
        idx = np.searchsorted(grid, ds.y[c])
        psi[c] += -lev.p10 * (tail[idx] - _integral(grid, lev.Hp * lev.F01)) / lev.n01
        c = (ds.g == 0) & (ds.t == 0) & is_d
        idx = np.searchsorted(grid, lev.Q(ds.y[c]))
        psi[c] += lev.p10 * (tail[idx] - _integral(grid, lev.Hp * lev.FQ00)) / lev.n00
    return psi / lev.B


def _cic_levels(ds: Dataset, ct: CellTable, stable_tol: float) -> dict:
    _require_binary(ct, "the analytic CIC variance")
    _gap_or_raise(ct)
    _require_stable(ct, stable_tol, "Wald-CIC")
    floor = density_floor(ct)
    return {d: _CicLevel(ds, ct, d, floor) for d in (0, 1)}


def influence_cic(ds: Dataset, ct: CellTable | None = None, stable_tol: float = 0.0) -> InfluenceVector:
    """psi_CIC = integral of (Psi_0 - Psi_1)(y) dy, with Psi_d the influence
    function of the switcher cdf at level d."""
    ct = _two_group(ds, ct)
    lev = _cic_levels(ds, ct, stable_tol)
    return InfluenceVector("cic", _psi_integrated(ds, lev[0]) - _psi_integrated(ds, lev[1]))


def _psi_at(ds: Dataset, lev: _CicLevel, y: float) -> np.ndarray:
    """Per-observation influence function of F_CIC,d evaluated at the point y."""
    n = len(ds)
    grid = lev.grid
    k = np.searchsorted(grid, y, side="right") - 1
    is_d = ds.d == lev.d
    psi = np.zeros(n)
    m = (ds.g == 1) & (ds.t == 1)
    ind = is_d[m].astype(float)
    psi[m] = (ind * (ds.y[m] <= y) - lev.p11 * lev.F11[k] - (ind - lev.p11) * lev.FS[k]) / lev.n11
    m = (ds.g == 1) & (ds.t == 0)
    ind = is_d[m].astype(float)
    below = np.zeros(m.sum())
    if lev.active:
        sel = is_d[m]
        below[sel] = lev.Q(ds.y[m][sel]) <= y
    psi[m] = -(below - lev.p10 * lev.K[k] - (ind - lev.p10) * lev.FS[k]) / lev.n10
    if lev.active:
        hp = lev.Hp[k]
        c = (ds.g == 0) & (ds.t == 1) & is_d
        psi[c] += -lev.p10 * hp * ((ds.y[c] <= y) - lev.F01[k]) / lev.n01
        c = (ds.g == 0) & (ds.t == 0) & is_d
        psi[c] += lev.p10 * hp * ((lev.Q(ds.y[c]) <= y) - lev.FQ00[k]) / lev.n00
    return psi / lev.B


def switcher_density(ct: CellTable, lev: _CicLevel, y: float, floor: float) -> float:
    """Signed kernel mixture (p11 f_{Y_d11} - p10 f_{Q_d(Y_d10)}) / (p11 - p10) at y."""
    total = 0.0
    if lev.p11 > 0:
        total += lev.p11 * kde(ct.cell(lev.d, 1, 1).sample, y, floor)[0]
    if lev.active:
        total -= lev.p10 * kde(lev.Q10, y, floor)[0]
    return float(total / lev.B)


def influence_lqte(ds: Dataset, q: float, ct: CellTable | None = None,
                   stable_tol: float = 0.0) -> InfluenceVector:
    """psi_q = Psi_0(y_0)/f_0(y_0) - Psi_1(y_1)/f_1(y_1) with y_d = F^{-1}_{CIC,d}(q)."""
    ct = _two_group(ds, ct)
    lev = _cic_levels(ds, ct, stable_tol)
    floor = density_floor(ct)
    psi = np.zeros(len(ds))
    for d, sign in ((1, -1.0), (0, 1.0)):
        y = float(switcher_cdf(ct, d).F.inverse(q))
        f = switcher_density(ct, lev[d], y, floor)
        if not f > floor:
            raise DensityFloorError(
                f"estimated switcher density for d={d} at its {q:g}-quantile ({y:g}) is "
                f"{f:.3g}, below the floor {floor:.3g}")
        psi += sign * _psi_at(ds, lev[d], y) / f
    return InfluenceVector("lqte", psi, q=float(q))


def normal_ci(point: float, se: float, level: float) -> tuple:
    z = norm.ppf(0.5 + level / 2)
    return (point - z * se, point + z * se, level)


def with_analytic(est: Estimate, iv: InfluenceVector, level: float = 0.95, cluster=None) -> Estimate:
    se = iv.se(cluster)
    return est.with_inference(se, normal_ci(est.point, se, level), iv.values, "analytic")


# ---------------------------------------------------------------- bootstrap

@dataclass(frozen=True)
class BootstrapConfig:
    reps: int = 999
    seed: int = 0
    scheme: str = "iid"
    ci: str = "percentile"
    level: float = 0.95
    n_jobs: int = 1
    max_fail: float = 0.10

    def __post_init__(self):
        if self.reps < 2:
            raise ValueError("bootstrap needs at least 2 replications")
        if self.scheme not in ("iid", "cluster"):
            raise ValueError(f"unknown bootstrap scheme {self.scheme!r}")
        if self.ci not in ("percentile", "normal"):
            raise ValueError(f"unknown confidence interval method {self.ci!r}")
        if not 0 < self.level < 1:
            raise ValueError("confidence level must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    point: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    level: float
    replicates: np.ndarray = field(repr=False)
    failures: int
    census: dict

    def column(self, j: int = 0) -> tuple:
        """(se, (lo, hi, level)) of the j-th statistic."""
        return float(self.se[j]), (float(self.ci_lo[j]), float(self.ci_hi[j]), self.level)

    def export(self, path, j: int = 0) -> None:
        np.savetxt(path, self.replicates[:, j], fmt="%.17g")


class _Resampler:
    def __init__(self, ds: Dataset, scheme: str):
        self.n = len(ds)
        self.members = None
        if scheme == "cluster":
            if ds.cluster is None:
                raise DesignError("cluster bootstrap needs a cluster column",
                                  hint="pass --cluster <column> or use the iid scheme")
            _, first, inv = np.unique(ds.cluster, return_index=True, return_inverse=True)
            order = np.argsort(first)                # clusters in order of first appearance
            rank = np.empty_like(order)
            rank[order] = np.arange(order.size)
            ids = rank[inv]
            srt = np.argsort(ids, kind="stable")
            bounds = np.searchsorted(ids[srt], np.arange(order.size + 1))
            self.members = [srt[bounds[k]:bounds[k + 1]] for k in range(order.size)]

    def draw(self, rng) -> np.ndarray:
        if self.members is None:
            return rng.integers(0, self.n, self.n)
        k = rng.integers(0, len(self.members), len(self.members))
        return np.concatenate([self.members[j] for j in k])


def bootstrap(ds: Dataset, statistic, cfg: BootstrapConfig = BootstrapConfig(), point=None) -> BootstrapResult:
    """Resample rows (or clusters) with replacement and recompute ``statistic``.

    ``statistic`` maps a Dataset to a float or a 1-d array. Replicate b uses
    the generator seeded with (seed, b), so results do not depend on
    ``n_jobs`` or on execution order. Replicates whose statistic raises a
    package error are dropped and counted.
    """
    if point is None:
        point = statistic(ds)
    point = np.atleast_1d(np.asarray(point, dtype=float))
    k = point.size
    res = _Resampler(ds, cfg.scheme)
    slots = np.full((cfg.reps, k), np.nan)
    errors = [None] * cfg.reps

    def one(b):
        rng = np.random.default_rng([cfg.seed, b])
        try:
            slots[b] = np.atleast_1d(np.asarray(statistic(ds.take(res.draw(rng))), dtype=float))
        except FuzzyDidError as exc:
            errors[b] = type(exc).__name__

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if cfg.n_jobs > 1:
            with ThreadPoolExecutor(cfg.n_jobs) as pool:
                list(pool.map(one, range(cfg.reps)))
        else:
            for b in range(cfg.reps):
                one(b)
    census = dict(sorted(Counter(e for e in errors if e).items()))
    failed = sum(census.values())
    ok = np.all(np.isfinite(slots), axis=1)
    nonfinite = int(np.sum(~ok)) - failed
    if nonfinite:
        census["NonFinite"] = nonfinite
        failed += nonfinite
    if failed > cfg.max_fail * cfg.reps or ok.sum() < 2:
        raise BootstrapError(
            f"{failed} of {cfg.reps} bootstrap replicates failed",
            census=census,
            hint="resampling often empties a cell; check cell sizes or use a larger sample",
        )
    reps = slots[ok]
    se = reps.std(axis=0, ddof=1)
    alpha = 1 - cfg.level
    if cfg.ci == "percentile":
        lo, hi = np.quantile(reps, [alpha / 2, 1 - alpha / 2], axis=0, method="weibull")
    else:
        z = norm.ppf(1 - alpha / 2)
        lo, hi = point - z * se, point + z * se
    return BootstrapResult(point, se, lo, hi, cfg.level, reps, failed, census)


def with_bootstrap(est: Estimate, result: BootstrapResult, j: int = 0) -> Estimate:
    se, ci = result.column(j)
    return est.with_inference(se, ci, None, "bootstrap")
