"""Designs with many groups: supergroup classification, pooled two-group
estimation with the increasing/decreasing weight w_10, and ordered-treatment
ACR weights.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import chi2_contingency

from .dataset import CellTable, Dataset, build_cells, control_is_stable, require_two_group
from .errors import FuzzyDidError, SupergroupError, WeakDesignError
from .estimators import EPS_DENOM, _num, wald_cic, wald_did, wald_tc

ESTIMATORS = {"did": wald_did, "tc": wald_tc, "cic": wald_cic}


class StabilityWarning(UserWarning):
    """Small expected counts or a group mix that shifts over time."""


@dataclass(frozen=True)
class Chi2Result:
    statistic: float
    df: int
    pvalue: float
    small_cells: bool


def chi2_stability(table) -> Chi2Result:
    """Pearson chi-squared test of independence on a (levels x periods) count table.

    Rows with a zero total are dropped. With fewer than two remaining rows
    there is nothing to test and the result is (0, p = 1).
    """
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] < 2:
        raise SupergroupError("stability table must have one column per period")
    if np.any(table.sum(axis=0) == 0):
        raise SupergroupError("a period has no observations in this group")
    table = table[table.sum(axis=1) > 0]
    if table.shape[0] < 2:
        return Chi2Result(0.0, 0, 1.0, False)
    stat, p, df, expected = chi2_contingency(table, correction=False)
    return Chi2Result(float(stat), int(df), float(p), bool(np.any(expected < 5)))


def _period_pair(ds: Dataset, periods) -> tuple:
    if periods is not None:
        return tuple(int(t) for t in periods)
    present = set(np.unique(ds.t).tolist())
    if not {0, 1} <= present:
        raise SupergroupError(
            f"periods {sorted(present)} do not include 0 and 1",
            hint="relabel the two comparison periods as 0 and 1",
        )
    return 0, 1


def _dt_table(d: np.ndarray, t: np.ndarray, levels, pair) -> np.ndarray:
    return np.array([[np.sum((d == lv) & (t == tt)) for tt in pair] for lv in levels])


@dataclass(frozen=True, eq=False)
class SupergroupMap:
    """group id -> label in {-1, 0, +1}."""

    labels: dict
    pvalues: dict = field(default_factory=dict)
    changes: dict = field(default_factory=dict)
    threshold: float = 0.5
    notes: tuple = ()
    group_period_pvalue: float | None = None

    def groups(self, label: int) -> list:
        return sorted(g for g, s in self.labels.items() if s == label)

    def diff(self, other: "SupergroupMap") -> dict:
        """Groups labelled differently by the two maps: group -> (this label, other label)."""
        keys = sorted(set(self.labels) | set(other.labels))
        return {g: (self.labels.get(g), other.labels.get(g)) for g in keys
                if self.labels.get(g) != other.labels.get(g)}

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "groups": [
                {"group": int(g), "label": int(self.labels[g]),
                 "pvalue": _num(self.pvalues.get(g)), "change": _num(self.changes.get(g))}
                for g in sorted(self.labels)
            ],
            "group_period_pvalue": _num(self.group_period_pvalue),
            "notes": list(self.notes),
        }

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "label"])
            for g in sorted(self.labels):
                w.writerow([g, self.labels[g]])

    @classmethod
    def read(cls, path) -> "SupergroupMap":
        path = Path(path)
        if not path.exists():
            raise SupergroupError(f"supergroup map {str(path)!r} does not exist")
        labels = {}
        with open(path, newline="") as fh:
            for k, row in enumerate(csv.reader(fh), start=1):
                if not row or (k == 1 and row[0].strip().lower() == "group"):
                    continue
                try:
                    g, s = int(row[0]), int(row[1])
                except (ValueError, IndexError):
                    raise SupergroupError(f"{path.name} line {k}: expected 'group,label'") from None
                if s not in (-1, 0, 1):
                    raise SupergroupError(f"{path.name} line {k}: label {s} not in {{-1, 0, 1}}")
                if g in labels:
                    raise SupergroupError(f"{path.name} line {k}: group {g} labelled twice")
                labels[g] = s
        if not labels:
            raise SupergroupError(f"supergroup map {str(path)!r} is empty")
        return cls(labels, threshold=float("nan"))


def classify_supergroups(ds: Dataset, threshold: float = 0.5, periods=None) -> SupergroupMap:
    """Label each group stable (0), increasing (+1) or decreasing (-1).

    A group is stable when the chi-squared test of equal treatment
    distributions in the two periods has p-value above ``threshold``;
    otherwise the sign of the change in its mean treatment decides.
    """
    pair = _period_pair(ds, periods)
    keep = np.isin(ds.t, pair)
    d, g, t = ds.d[keep], ds.g[keep], ds.t[keep]
    groups = np.unique(g)
    if groups.size < 2:
        raise SupergroupError("classification needs at least two groups")
    levels = np.unique(d)
    labels, pvals, changes, notes = {}, {}, {}, []
    small = []
    for gg in groups.tolist():
        m = g == gg
        for tt in pair:
            if not np.any(m & (t == tt)):
                raise SupergroupError(f"group {gg} has no observations in period {tt}")
        res = chi2_stability(_dt_table(d[m], t[m], levels, pair))
        change = float(d[m & (t == pair[1])].mean() - d[m & (t == pair[0])].mean())
        pvals[gg], changes[gg] = res.pvalue, change
        if res.small_cells:
            small.append(gg)
        if res.pvalue > threshold:
            labels[gg] = 0
        elif change > 0:
            labels[gg] = 1
        elif change < 0:
            labels[gg] = -1
        else:
            labels[gg] = 0
            msg = (f"group {gg}: p = {res.pvalue:.3g} <= {threshold} but the mean treatment "
                   f"did not change; labelled stable")
            notes.append(msg)
            warnings.warn(msg, StabilityWarning, stacklevel=2)
    if small:
        msg = f"expected counts below 5 in the stability tests of groups {small}"
        notes.append(msg)
        warnings.warn(msg, StabilityWarning, stacklevel=2)
    if not any(v == 0 for v in labels.values()):
        raise SupergroupError(
            "no group has a stable treatment distribution",
            hint="raise --pvalue-threshold or supply a known supergroup map",
        )
    gt = chi2_stability(np.array([[np.sum((g == gg) & (t == tt)) for tt in pair] for gg in groups]))
    if gt.pvalue < 0.05:
        msg = (f"the group mix changes between periods (chi-squared p = {gt.pvalue:.3g}); "
               "pooled estimands assume a stable distribution of groups")
        notes.append(msg)
        warnings.warn(msg, StabilityWarning, stacklevel=2)
    return SupergroupMap(labels, pvals, changes, threshold, tuple(notes), gt.pvalue)


def split_sample(ds: Dataset) -> tuple:
    """(classification half, estimation half): rows at odd positions (1st, 3rd, ...)
    and rows at even positions."""
    idx = np.arange(len(ds))
    return ds.take(idx[0::2]), ds.take(idx[1::2])


@dataclass(frozen=True, eq=False)
class AggregateEstimate:
    kind: str
    components: dict
    w10: float
    point: float
    first_stages: dict
    shares: dict
    se: float | None = None
    ci: tuple | None = None
    method: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def with_inference(self, se, ci, method) -> "AggregateEstimate":
        from dataclasses import replace
        return replace(self, se=se, ci=ci, method=method)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "point": _num(self.point),
            "w10": _num(self.w10),
            "components": {
                ("increasing" if s == 1 else "decreasing"): e.to_dict()
                for s, e in sorted(self.components.items(), reverse=True)
            },
            "se": _num(self.se),
            "ci": None if self.ci is None else {"lo": _num(self.ci[0]), "hi": _num(self.ci[1]),
                                                "level": self.ci[2]},
            "method": self.method,
            "diagnostics": self.diagnostics,
        }


def pooled_cells(ds: Dataset, smap: SupergroupMap, label: int, periods=(0, 1)) -> CellTable:
    """Two-group cell table with supergroup ``label`` as group 1 and G*=0 as group 0."""
    star = supergroup_column(ds, smap)
    keep = np.isin(star, (label, 0)) & np.isin(ds.t, periods)
    sub = ds.subset(keep)
    t = np.where(sub.t == periods[1], 1, 0)
    return build_cells(sub.replace(g=(star[keep] == label).astype(np.int64), t=t))


def supergroup_column(ds: Dataset, smap: SupergroupMap) -> np.ndarray:
    groups = np.unique(ds.g)
    missing = [int(v) for v in groups if int(v) not in smap.labels]
    if missing:
        raise SupergroupError(f"groups {missing} have no supergroup label")
    lookup = {g: s for g, s in smap.labels.items()}
    return np.array([lookup[int(v)] for v in ds.g], dtype=np.int64)


def aggregate(ds: Dataset, smap: SupergroupMap, kind: str = "did", periods=(0, 1)) -> AggregateEstimate:
    """Combine the increasing and decreasing supergroups' estimates against the stable one.

    Pooling is physical: rows are re-tagged with their supergroup and the
    two-group estimators run unchanged. For the decreasing arm the first stage
    is negative, which the Wald ratios accept as is.
    """
    if kind not in ESTIMATORS:
        raise ValueError(f"unknown estimator {kind!r}")
    star = supergroup_column(ds, smap)
    inside = np.isin(ds.t, periods)
    present = set(np.unique(star[inside]).tolist())
    if 0 not in present:
        raise SupergroupError("no stable (G*=0) group in the data")
    arms = [s for s in (1, -1) if s in present]
    if not arms:
        raise SupergroupError("neither an increasing nor a decreasing supergroup is present")
    n = int(inside.sum())
    comps, did_d, share, notes = {}, {}, {}, {}
    for s in arms:
        ct = pooled_cells(ds, smap, s, periods)
        require_two_group(ct)
        kwargs = {} if kind == "did" else {"stable_tol": np.inf}
        comps[s] = ESTIMATORS[kind](ct, **kwargs)
        did_d[s] = (ct.mean_d(1, 1) - ct.mean_d(1, 0)) - (ct.mean_d(0, 1) - ct.mean_d(0, 0))
        share[s] = float(np.sum(star[inside] == s)) / n
        if kind != "did" and not control_is_stable(ct, 0.0):
            notes["control_shift"] = {
                str(d): ct.share(d, 0, 1) - ct.share(d, 0, 0) for d in ct.levels}
    if len(arms) == 1:
        w10 = 1.0 if arms[0] == 1 else 0.0
    else:
        a = did_d[1] * share[1]
        b = -did_d[-1] * share[-1]
        if abs(a + b) <= EPS_DENOM:
            raise WeakDesignError("the pooled first stages cancel; w_10 is undefined")
        w10 = a / (a + b)
    point = sum((w10 if s == 1 else 1 - w10) * comps[s].point for s in arms)
    diag = dict(notes)
    if not 0 <= w10 <= 1:
        diag["w10_outside_unit_interval"] = True
        warnings.warn(f"w_10 = {w10:.4g} lies outside [0, 1]; a pooled first stage has the "
                      "wrong sign", StabilityWarning, stacklevel=2)
    if kind != "did":
        star_keep = np.isin(star, (0,)) & inside
        sub = ds.subset(star_keep)
        levels = np.unique(sub.d)
        diag["pooled_control_stability_pvalue"] = chi2_stability(
            _dt_table(sub.d, sub.t, levels, periods)).pvalue
    return AggregateEstimate(
        kind, comps, float(w10), float(point),
        first_stages={str(s): float(v) for s, v in did_d.items()},
        shares={str(s): v for s, v in share.items()},
        diagnostics=diag,
    )


@dataclass(frozen=True)
class AcrWeights:
    weights: dict
    denominator: float
    dominance: bool
    negative_levels: tuple
    stable_by_level: dict
    control_stable: bool

    def to_dict(self) -> dict:
        return {
            "weights": {str(d): w for d, w in self.weights.items()},
            "denominator": self.denominator,
            "dominance": self.dominance,
            "negative_levels": list(self.negative_levels),
            "stable_by_level": {str(d): v for d, v in self.stable_by_level.items()},
            "control_stable": self.control_stable,
        }


def acr_weights(ct: CellTable, stable_tol: float = 0.0) -> AcrWeights:
    """w_d = [P(D_11 >= d) - P(D_10 >= d)] / [E(D_11) - E(D_10)], d = 1..d_max."""
    require_two_group(ct)
    top = max(ct.levels)
    if top < 1:
        raise FuzzyDidError("ACR weights need at least one positive treatment level")
    denom = ct.mean_d(1, 1) - ct.mean_d(1, 0)
    if abs(denom) <= EPS_DENOM:
        raise WeakDesignError("E(D_11) - E(D_10) is numerically zero; ACR weights are undefined")

    def survival(t, d):
        return sum(p for lv, p in ct.group_period(1, t).shares.items() if lv >= d)

    diffs = {d: survival(1, d) - survival(0, d) for d in range(1, top + 1)}
    weights = {d: v / denom for d, v in diffs.items()}
    negative = tuple(d for d, w in weights.items() if w < 0)
    stable = {d: abs(ct.share(d, 0, 1) - ct.share(d, 0, 0)) <= stable_tol for d in ct.levels}
    return AcrWeights(
        weights, float(denom),
        dominance=all(v >= 0 for v in diffs.values()),
        negative_levels=negative,
        stable_by_level=stable,
        control_stable=all(stable.values()),
    )
