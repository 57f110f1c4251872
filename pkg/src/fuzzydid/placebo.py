"""Pre-period placebo diagnostics.

Each statistic re-runs the numerator of an estimator on two pre-treatment
periods, where it should be zero if the identifying assumptions hold. They are
only informative when the treatment distribution is itself stable between the
two placebo periods, which the report checks group by group.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CellTable, Dataset, build_cells, require_two_group
from .errors import DesignError, MissingCellError
from .estimators import _num, cic_counterfactual, did_of, tc_counterfactual
from .inference import BootstrapConfig, bootstrap
from .multigroup import chi2_stability

STABILITY_LEVEL = 0.05


def default_pair(ds: Dataset) -> tuple:
    """The two periods preceding the last one."""
    periods = np.unique(ds.t)
    if periods.size < 3:
        raise DesignError(
            f"placebo tests need at least three periods; found {periods.tolist()}",
            hint="supply pre-treatment periods or pass --placebo-pair",
        )
    return int(periods[-3]), int(periods[-2])


def placebo_cells(ds: Dataset, t_minus: int, t0: int) -> CellTable:
    """Cells of the placebo pair, with t_minus relabelled 0 and t0 relabelled 1."""
    if t_minus == t0:
        raise DesignError("the two placebo periods must differ")
    present = set(np.unique(ds.t).tolist())
    for tt in (t_minus, t0):
        if tt not in present:
            raise MissingCellError((tt,), f"period {tt} has no observations")
    keep = np.isin(ds.t, (t_minus, t0))
    sub = ds.subset(keep)
    ct = build_cells(sub.replace(t=(sub.t == t0).astype(np.int64)))
    require_two_group(ct)
    return ct


def did_statistic(ct: CellTable) -> float:
    return did_of(ct, "y")


def tc_statistic(ct: CellTable) -> float:
    return ct.mean_y(1, 1) - tc_counterfactual(ct)


def cic_statistic(ct: CellTable) -> float:
    return float(ct.mean_y(1, 1) - cic_counterfactual(ct, warn=False)[0])


def trend_statistics(ct: CellTable) -> dict:
    """Per level d: (E(Y_d11) - E(Y_d10)) - (E(Y_d01) - E(Y_d00)); levels with a missing cell are omitted."""
    out = {}
    for d in ct.levels:
        if all(ct.has_cell(d, g, t) for g in (0, 1) for t in (0, 1)):
            m = {(g, t): ct.cell(d, g, t).mean for g in (0, 1) for t in (0, 1)}
            out[d] = (m[1, 1] - m[1, 0]) - (m[0, 1] - m[0, 0])
    return out


STATISTICS = {"did": did_statistic, "tc": tc_statistic, "cic": cic_statistic}


@dataclass(frozen=True)
class PlaceboTest:
    name: str
    statistic: float
    se: float | None = None
    tstat: float | None = None
    d: int | None = None
    informative: bool = True

    def to_dict(self) -> dict:
        out = {"test": self.name, "statistic": _num(self.statistic), "se": _num(self.se),
               "t": _num(self.tstat), "informative": self.informative}
        if self.d is not None:
            out["d"] = self.d
        return out


@dataclass(frozen=True, eq=False)
class PlaceboReport:
    pair: tuple
    tests: tuple
    stability_pvalues: dict
    informative: bool
    notes: tuple = ()
    bootstrap_failures: int = 0

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "informative": self.informative,
            "stability_pvalues": {str(g): _num(p) for g, p in sorted(self.stability_pvalues.items())},
            "tests": [t.to_dict() for t in self.tests],
            "notes": list(self.notes),
            "bootstrap_failures": self.bootstrap_failures,
        }


def first_stage_stability(ds: Dataset, t_minus: int, t0: int) -> dict:
    """Per-group chi-squared p-value for equal treatment distributions in the two placebo periods."""
    out = {}
    levels = np.unique(ds.d)
    for g in (0, 1):
        m = ds.g == g
        table = [[np.sum(m & (ds.t == tt) & (ds.d == lv)) for tt in (t_minus, t0)] for lv in levels]
        out[g] = chi2_stability(table).pvalue
    return out


def _stat(kind: str, ds: Dataset, t_minus: int, t0: int, cfg):
    ct = placebo_cells(ds, t_minus, t0)
    point = STATISTICS[kind](ct)
    if cfg is None:
        return point, None
    res = bootstrap(ds, lambda x: STATISTICS[kind](placebo_cells(x, t_minus, t0)), cfg, point=point)
    return point, float(res.se[0])


def placebo_did(ds: Dataset, t_minus: int, t0: int, cfg: BootstrapConfig | None = None):
    """DID of the outcome between t_minus and t0; returns (statistic, bootstrap se or None)."""
    return _stat("did", ds, t_minus, t0, cfg)


def placebo_tc(ds: Dataset, t_minus: int, t0: int, cfg: BootstrapConfig | None = None):
    """E(Y_{1,t0}) - E(Y_{1,t-} + delta_D), with delta_d measured on the placebo pair."""
    return _stat("tc", ds, t_minus, t0, cfg)


def placebo_cic(ds: Dataset, t_minus: int, t0: int, cfg: BootstrapConfig | None = None):
    """E(Y_{1,t0}) - E(Q_D(Y_{1,t-})), with Q_d measured on the placebo pair."""
    return _stat("cic", ds, t_minus, t0, cfg)


def conditional_trends_test(ds: Dataset, t_minus: int, t0: int, cfg: BootstrapConfig | None = None) -> dict:
    """Per-level DID statistics; maps d -> (statistic, se). Levels lacking a cell are skipped."""
    ct = placebo_cells(ds, t_minus, t0)
    points = trend_statistics(ct)
    if cfg is None or not points:
        return {d: (v, None) for d, v in points.items()}
    levels = sorted(points)

    def stat(x):
        s = trend_statistics(placebo_cells(x, t_minus, t0))
        if any(d not in s for d in levels):
            raise MissingCellError((t_minus, t0), "a per-level placebo cell is empty in this resample")
        return [s[d] for d in levels]

    res = bootstrap(ds, stat, cfg, point=[points[d] for d in levels])
    return {d: (points[d], float(res.se[j])) for j, d in enumerate(levels)}


def placebo_report(ds: Dataset, pair=None, cfg: BootstrapConfig | None = None,
                   kinds=("did", "tc", "cic")) -> PlaceboReport:
    """All placebo statistics on one pair, sharing bootstrap resamples."""
    t_minus, t0 = default_pair(ds) if pair is None else (int(pair[0]), int(pair[1]))
    ct = placebo_cells(ds, t_minus, t0)
    pvals = first_stage_stability(ds, t_minus, t0)
    informative = all(p > STABILITY_LEVEL for p in pvals.values())
    notes = []
    if not informative:
        notes.append(
            f"treatment distribution changes between periods {t_minus} and {t0} "
            f"(chi-squared p <= {STABILITY_LEVEL}); placebo statistics may differ from zero "
            "even if the identifying assumptions hold")
    names, points = [], []
    for kind in kinds:
        try:
            points.append(STATISTICS[kind](ct))
            names.append((kind, None))
        except MissingCellError as exc:
            notes.append(f"{kind} placebo skipped: {exc}")
    trends = trend_statistics(ct)
    for d in ct.levels:
        if d in trends:
            points.append(trends[d])
            names.append(("trend", d))
        else:
            notes.append(f"conditional trend for d={d} skipped: a placebo cell is empty")
    ses = [None] * len(points)
    failures = 0
    if cfg is not None and points:
        def stat(x):
            c = placebo_cells(x, t_minus, t0)
            tr = trend_statistics(c)
            out = []
            for kind, d in names:
                if kind == "trend":
                    if d not in tr:
                        raise MissingCellError((d,), f"placebo cell for d={d} is empty in this resample")
                    out.append(tr[d])
                else:
                    out.append(STATISTICS[kind](c))
            return out

        res = bootstrap(ds, stat, cfg, point=points)
        ses = [float(v) for v in res.se]
        failures = res.failures
    tests = []
    for (kind, d), v, se in zip(names, points, ses):
        t = None if se is None or se == 0 else float(v) / se
        tests.append(PlaceboTest(kind, float(v), se, t, d, informative))
    return PlaceboReport((t_minus, t0), tuple(tests), pvals, informative, tuple(notes), failures)
