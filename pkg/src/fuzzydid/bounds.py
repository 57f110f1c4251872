"""Partial identification of the LATE and LQTEs when the control group's
treatment distribution moves between periods.

Bound cdfs are evaluated exactly on the pooled outcome grid augmented with the
support endpoints, so the endpoint atoms created by the indicator terms are
ordinary grid jumps and :func:`~fuzzydid.empirical.stieltjes_mean` is exact.
Declaring an infinite endpoint is allowed; any mass sent there makes the
corresponding bound infinite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import CellTable, control_is_stable, require_two_group, shares_ratio
from .empirical import EPS, StepCdf, clip01, ecdf_at, envelope, stieltjes_mean
from .errors import BoundsError
from .estimators import EPS_DENOM, _num, lqte, wald_cic


@dataclass(frozen=True, eq=False)
class BoundsResult:
    method: str
    lower: float
    upper: float
    support: tuple
    quantiles: tuple = ()          # (q, lower, upper) triples, cic only
    diagnostics: dict = field(default_factory=dict)
    lower_ci: tuple | None = None
    upper_ci: tuple | None = None

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "lower": _num(self.lower),
            "upper": _num(self.upper),
            "support": [_num(v) for v in self.support],
            "quantiles": [{"q": q, "lower": _num(lo), "upper": _num(hi)} for q, lo, hi in self.quantiles],
            "diagnostics": self.diagnostics,
        }
        for key, ci in (("lower_ci", self.lower_ci), ("upper_ci", self.upper_ci)):
            out[key] = None if ci is None else {"lo": _num(ci[0]), "hi": _num(ci[1]), "level": ci[2]}
        return out


def resolve_support(ct: CellTable, support=None) -> tuple:
    lo, hi = ct.support if support is None else (float(support[0]), float(support[1]))
    if not lo < hi:
        raise BoundsError(f"support [{lo}, {hi}] is empty or degenerate")
    smin, smax = ct.support
    if smin < lo or smax > hi:
        raise BoundsError(
            f"observed outcomes span [{smin:g}, {smax:g}], outside the declared support [{lo:g}, {hi:g}]",
            hint="widen --support or drop it to use the sample range",
        )
    return lo, hi


def _bound_grid(ct: CellTable, lo: float, hi: float) -> np.ndarray:
    return np.unique(np.concatenate((ct.grid, [lo, hi])))


def _require_bounds_design(ct: CellTable) -> float:
    require_two_group(ct)
    if not set(ct.levels) <= {0, 1}:
        raise BoundsError(f"bounds are implemented for a binary treatment; levels are {list(ct.levels)}")
    for t in (0, 1):
        p = ct.share(1, 0, t)
        if not 0 < p < 1:
            raise BoundsError(
                f"bounds need 0 < P(D_0{t}=1) < 1; got {p:g}",
                hint="both treatment levels must be present in the control group in both periods",
            )
    gap = ct.mean_d(1, 1) - ct.mean_d(1, 0)
    if abs(gap) <= EPS_DENOM:
        raise BoundsError("E(D_11) - E(D_10) is numerically zero")
    return gap


def tc_level_cdfs(ct: CellTable, d: int, lo: float, hi: float):
    """(F_lower, F_upper) bounding the cdf of Y_d01 for the relevant subpopulation."""
    lam = shares_ratio(ct, 0, d)
    grid = _bound_grid(ct, lo, hi)
    F = ecdf_at(ct.cell(d, 0, 1).sample, grid)
    below = clip01(1 - lam * (1 - F)) - clip01(1 - lam) * (grid < hi)
    above = clip01(lam * F) + (1 - clip01(lam)) * (grid >= lo)
    return StepCdf(grid, below, lo, hi), StepCdf(grid, above, lo, hi)


def tc_bounds(ct: CellTable, support=None) -> BoundsResult:
    gap = _require_bounds_design(ct)
    lo, hi = resolve_support(ct, support)
    delta_lo, delta_hi = {}, {}
    for d in ct.levels_in(1, 0):
        F_below, F_above = tc_level_cdfs(ct, d, lo, hi)
        e00 = ct.cell(d, 0, 0).mean
        delta_lo[d] = stieltjes_mean(F_above, allow_infinite=True) - e00
        delta_hi[d] = stieltjes_mean(F_below, allow_infinite=True) - e00

    def ratio(deltas):
        shift = sum(ct.share(d, 1, 0) * v for d, v in deltas.items())
        return (ct.mean_y(1, 1) - ct.mean_y(1, 0) - shift) / gap

    a, b = ratio(delta_hi), ratio(delta_lo)
    return BoundsResult(
        "tc", float(min(a, b)), float(max(a, b)), (lo, hi),
        diagnostics={
            "delta_lower": {str(d): _num(v) for d, v in delta_lo.items()},
            "delta_upper": {str(d): _num(v) for d, v in delta_hi.items()},
            "lambda0": {str(d): _num(shares_ratio(ct, 0, d)) for d in ct.levels},
            "defective_mass": defective_mass_report(ct),
        },
    )


class _RankCdf:
    """H_d = F_{Y_d10} o F^{-1}_{Y_d00}, represented through the ranks F_{Y_d00}(Y_i), i in (d,1,0).

    With this representation H_d(F_{Y_d01}(y)) equals the empirical cdf of
    Q_d(Y_d10) at y exactly, so the bounds collapse onto the point estimator
    when the control group is stable.
    """

    def __init__(self, ct: CellTable, d: int):
        self.ranks = np.sort(ecdf_at(ct.cell(d, 0, 0).sample, ct.cell(d, 1, 0).sample))
        self.n = self.ranks.size

    def __call__(self, u):
        return np.searchsorted(self.ranks, np.asarray(u) + EPS, side="right") / self.n

    def inverse(self, q):
        q = np.asarray(q, dtype=float)
        k = np.clip(np.ceil(q * self.n - 1e-9).astype(np.int64), 1, self.n)
        return np.where(q <= 0, 0.0, np.where(q > 1, 1.0, self.ranks[k - 1]))


@dataclass(frozen=True, eq=False)
class _CicLevel:
    grid: np.ndarray
    T_lower: np.ndarray
    T_upper: np.ndarray
    G_lower: np.ndarray
    G_upper: np.ndarray
    C_lower: np.ndarray
    C_upper: np.ndarray
    F_lower: StepCdf
    F_upper: StepCdf
    crossing: float


def cic_level(ct: CellTable, d: int, lo: float, hi: float) -> _CicLevel:
    grid = _bound_grid(ct, lo, hi)
    p11, p10 = ct.share(d, 1, 1), ct.share(d, 1, 0)
    if abs(p11 - p10) <= EPS_DENOM:
        raise BoundsError(f"P(D_11={d}) equals P(D_10={d}); the switcher cdf is undefined")
    F11 = ecdf_at(ct.cell(d, 1, 1).sample, grid) if p11 > 0 else np.zeros(grid.size)
    lam0 = shares_ratio(ct, 0, d)
    F01 = ecdf_at(ct.cell(d, 0, 1).sample, grid)
    if p10 > 0:
        H = _RankCdf(ct, d)
        lam1 = p11 / p10
        T_lo = clip01((lam0 * F01 - H.inverse(lam1 * F11)) / (lam0 - 1))
        T_hi = clip01((lam0 * F01 - H.inverse(lam1 * F11 + 1 - lam1)) / (lam0 - 1))
        G_lo = lam0 * F01 + (1 - lam0) * T_lo
        G_hi = lam0 * F01 + (1 - lam0) * T_hi
        C_lo = (p11 * F11 - p10 * H(G_lo)) / (p11 - p10)
        C_hi = (p11 * F11 - p10 * H(G_hi)) / (p11 - p10)
    else:
        # no treatment-group units at level d in period 0: switchers are all of (d,1,1)
        T_lo = T_hi = G_lo = G_hi = np.full(grid.size, np.nan)
        C_lo = C_hi = F11
    lower = clip01(envelope(StepCdf(grid, C_lo), "sup-below").values)
    upper = clip01(envelope(StepCdf(grid, C_hi), "inf-above").values)
    lower[-1] = upper[-1] = 1.0
    crossing = float(max(0.0, np.max(lower - upper)))
    lower = np.minimum(lower, upper)
    return _CicLevel(
        grid, T_lo, T_hi, G_lo, G_hi, C_lo, C_hi,
        StepCdf(grid, lower, lo, hi), StepCdf(grid, upper, lo, hi), crossing,
    )


def _increasing(v) -> bool:
    v = np.asarray(v)
    v = v[np.isfinite(v)]
    return bool(np.all(np.diff(v) >= -EPS))


def cic_bounds(ct: CellTable, quantiles=(), support=None, stable_tol: float = 0.0) -> BoundsResult:
    _require_bounds_design(ct)
    lo, hi = resolve_support(ct, support)
    qs = tuple(float(q) for q in quantiles)
    if control_is_stable(ct, stable_tol):
        point = wald_cic(ct, stable_tol=stable_tol).point
        taus = lqte(ct, list(qs), stable_tol=stable_tol) if qs else []
        return BoundsResult(
            "cic", point, point, (lo, hi),
            quantiles=tuple((e.q, e.point, e.point) for e in taus),
            diagnostics={"stable_control": True, "defective_mass": defective_mass_report(ct)},
        )
    lev = {d: cic_level(ct, d, lo, hi) for d in (0, 1)}
    mean = {(d, side): stieltjes_mean(getattr(lev[d], f"F_{side}"), allow_infinite=True)
            for d in (0, 1) for side in ("lower", "upper")}
    w_lo = mean[1, "upper"] - mean[0, "lower"]
    w_hi = mean[1, "lower"] - mean[0, "upper"]
    qrows = []
    for q in qs:
        t_lo = max(lev[1].F_upper.inverse(q), lo) - min(lev[0].F_lower.inverse(q), hi)
        t_hi = min(lev[1].F_lower.inverse(q), hi) - max(lev[0].F_upper.inverse(q), lo)
        qrows.append((q, float(t_lo), float(t_hi)))
    sharp = {
        str(d): {name: _increasing(getattr(lev[d], name))
                 for name in ("T_lower", "T_upper", "G_lower", "G_upper", "C_lower", "C_upper")}
        for d in (0, 1)
    }
    return BoundsResult(
        "cic", float(w_lo), float(w_hi), (lo, hi), quantiles=tuple(qrows),
        diagnostics={
            "stable_control": False,
            "lambda0": {str(d): _num(shares_ratio(ct, 0, d)) for d in ct.levels},
            "envelope_crossing": {str(d): lev[d].crossing for d in (0, 1)},
            "increasing_bounds": sharp,
            "defective_mass": defective_mass_report(ct),
        },
    )


def defective_mass_report(ct: CellTable) -> dict:
    """Per level: whether the bound cdfs of Y_d01 are proper without their endpoint atoms,
    and the mass 1 - M01(lambda_0d) the indicator terms add at each endpoint."""
    out = {}
    for d in ct.levels:
        lam = shares_ratio(ct, 0, d)
        if not np.isfinite(lam):
            out[str(d)] = {"lambda0": None, "proper": False, "endpoint_mass": None}
            continue
        mass = float(1 - clip01(lam))
        out[str(d)] = {"lambda0": float(lam), "proper": bool(lam >= 1), "endpoint_mass": mass}
    return out
