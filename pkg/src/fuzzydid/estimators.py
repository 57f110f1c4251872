"""Point estimators for the two-group, two-period fuzzy design.

Group 1 is the treatment group and group 0 the control group; period 0 is
before and period 1 after. All estimators read a :class:`CellTable` and return
an :class:`Estimate` without inference fields; the ``inference`` module fills
those in.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import CellTable, control_is_stable, require_two_group
from .empirical import StepCdf, clip01, ecdf_at, envelope, qq_transform
from .errors import DesignError, MissingCellError, UnstableControlError, WeakDesignError

EPS_DENOM = 1e-9


class SupportWarning(UserWarning):
    """Treatment-group outcomes fall outside the control cell's support."""


@dataclass(frozen=True, eq=False)
class Estimate:
    kind: str
    point: float
    se: float | None = None
    ci: tuple | None = None
    influence: np.ndarray | None = field(default=None, repr=False)
    method: str | None = None
    q: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.kind if self.q is None else f"{self.kind}({self.q:g})"

    def with_inference(self, se, ci=None, influence=None, method=None) -> "Estimate":
        return dataclasses.replace(self, se=se, ci=ci, influence=influence, method=method)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "point": _num(self.point), "se": _num(self.se)}
        if self.q is not None:
            out["q"] = self.q
        out["ci"] = None if self.ci is None else {
            "lo": _num(self.ci[0]), "hi": _num(self.ci[1]), "level": self.ci[2]}
        out["method"] = self.method
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return out


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else None


@dataclass(frozen=True, eq=False)
class SwitcherCdf:
    """Estimated cdf of Y_11(d) among switchers.

    ``raw`` is the signed step function given by the defining formula and
    ``F`` its clipped running-max rearrangement, which is a proper cdf.
    """

    d: int
    raw: StepCdf
    F: StepCdf
    violation: float
    rearranged: bool


def first_stage_gap(ct: CellTable) -> float:
    return ct.mean_d(1, 1) - ct.mean_d(1, 0)


def did_of(ct: CellTable, what: str) -> float:
    f = ct.mean_y if what == "y" else ct.mean_d
    return f(1, 1) - f(1, 0) - (f(0, 1) - f(0, 0))


def _gap_or_raise(ct: CellTable) -> float:
    gap = first_stage_gap(ct)
    if abs(gap) <= EPS_DENOM:
        raise WeakDesignError(
            f"E(D_11) - E(D_10) = {gap:.3g} is numerically zero",
            hint="the treatment group's treatment rate must change between the periods",
        )
    return gap


def _require_stable(ct: CellTable, stable_tol: float, name: str) -> None:
    if not control_is_stable(ct, stable_tol):
        moved = {d: round(ct.share(d, 0, 1) - ct.share(d, 0, 0), 12) for d in ct.levels}
        raise UnstableControlError(
            f"{name} needs a stable treatment distribution in the control group; "
            f"p(d|0,1) - p(d|0,0) = {moved} exceeds tolerance {stable_tol:g}"
        )


def _control_cells(ct: CellTable, d: int, name: str):
    try:
        return ct.cell(d, 0, 0), ct.cell(d, 0, 1)
    except MissingCellError as exc:
        raise MissingCellError(
            exc.cell,
            f"{name} needs control cells with D={d} in both periods; {exc}",
            hint="every treatment level seen in the treatment group at period 0 "
                 "must also appear in the control group in both periods",
        ) from None


def _treated_levels(ct: CellTable) -> list:
    """Levels present in the treatment group at period 0."""
    return ct.levels_in(1, 0)


def wald_did(ct: CellTable) -> Estimate:
    require_two_group(ct)
    did_y, did_d = did_of(ct, "y"), did_of(ct, "d")
    if abs(did_d) <= EPS_DENOM:
        raise WeakDesignError(
            f"DID of the treatment is {did_d:.3g}; the Wald-DID ratio is undefined",
            hint="the two groups' treatment rates must evolve differently",
        )
    return Estimate("did", float(did_y / did_d), diagnostics={"did_y": did_y, "did_d": did_d})


def tc_deltas(ct: CellTable) -> dict:
    """delta_d = E(Y_d01) - E(Y_d00) for every level of the treatment group at period 0."""
    out = {}
    for d in _treated_levels(ct):
        c0, c1 = _control_cells(ct, d, "Wald-TC")
        out[d] = c1.mean - c0.mean
    return out


def tc_counterfactual(ct: CellTable) -> float:
    """E(Y_10 + delta_{D_10})."""
    deltas = tc_deltas(ct)
    return ct.mean_y(1, 0) + sum(ct.share(d, 1, 0) * v for d, v in deltas.items())


def wald_tc(ct: CellTable, stable_tol: float = 0.0) -> Estimate:
    require_two_group(ct)
    gap = _gap_or_raise(ct)
    _require_stable(ct, stable_tol, "Wald-TC")
    deltas = tc_deltas(ct)
    cf = ct.mean_y(1, 0) + sum(ct.share(d, 1, 0) * v for d, v in deltas.items())
    return Estimate(
        "tc", float((ct.mean_y(1, 1) - cf) / gap),
        diagnostics={"delta": {str(d): v for d, v in deltas.items()}, "first_stage_gap": gap},
    )


def cic_transformed(ct: CellTable, d: int, warn: bool = True) -> tuple:
    """Q_d applied to the (d, 1, 0) sample, plus the out-of-support count."""
    _control_cells(ct, d, "Wald-CIC")
    qq = qq_transform(d, ct)
    sample = ct.cell(d, 1, 0).sample
    outside = qq.out_of_support(sample)
    if outside and warn:
        warnings.warn(
            f"{outside} treatment-group period-0 outcome(s) with D={d} lie outside the "
            f"control cell's support; they are mapped to the nearest target quantile",
            SupportWarning, stacklevel=3,
        )
    return np.asarray(qq(sample), dtype=float), outside


def cic_counterfactual(ct: CellTable, warn: bool = True) -> tuple:
    """E(Q_{D_10}(Y_10)) and the out-of-support count per level."""
    total, outside = 0.0, {}
    for d in _treated_levels(ct):
        qy, out = cic_transformed(ct, d, warn)
        total += ct.share(d, 1, 0) * qy.mean()
        outside[str(d)] = out
    return total, outside


def wald_cic(ct: CellTable, stable_tol: float = 0.0) -> Estimate:
    require_two_group(ct)
    gap = _gap_or_raise(ct)
    _require_stable(ct, stable_tol, "Wald-CIC")
    cf, outside = cic_counterfactual(ct)
    return Estimate(
        "cic", float((ct.mean_y(1, 1) - cf) / gap),
        diagnostics={"counterfactual_mean": cf, "out_of_support": outside,
                     "first_stage_gap": gap},
    )


def switcher_cdf(ct: CellTable, d: int, grid=None) -> SwitcherCdf:
    require_two_group(ct)
    p11, p10 = ct.share(d, 1, 1), ct.share(d, 1, 0)
    denom = p11 - p10
    if abs(denom) <= EPS_DENOM:
        raise WeakDesignError(
            f"P(D_11={d}) - P(D_10={d}) = {denom:.3g}; the switcher cdf for d={d} is undefined")
    grid = ct.grid if grid is None else np.asarray(grid, dtype=float)
    f11 = ecdf_at(ct.cell(d, 1, 1).sample, grid) if p11 > 0 else np.zeros(grid.size)
    if p10 > 0:
        qy, _ = cic_transformed(ct, d, warn=False)
        fq = ecdf_at(np.sort(qy), grid)
    else:
        fq = np.zeros(grid.size)
    raw = StepCdf(grid, (p11 * f11 - p10 * fq) / denom)
    repaired = clip01(envelope(raw, "sup-below").values)
    repaired[-1] = 1.0
    violation = float(np.max(np.abs(repaired - raw.values)))
    F = StepCdf(grid, repaired, proper=True)
    return SwitcherCdf(d, raw, F, violation, rearranged=violation > 0)


def _require_binary(ct: CellTable, name: str) -> None:
    if not set(ct.levels) <= {0, 1}:
        raise DesignError(f"{name} is defined for a binary treatment; levels are {list(ct.levels)}")


def lqte(ct: CellTable, q, stable_tol: float = 0.0):
    """tau_q = F^{-1}_{CIC,1}(q) - F^{-1}_{CIC,0}(q) from the rearranged switcher cdfs.

    ``q`` may be a scalar (returns one Estimate) or a sequence (returns a list).
    """
    require_two_group(ct)
    _require_binary(ct, "the LQTE")
    _gap_or_raise(ct)
    _require_stable(ct, stable_tol, "the LQTE")
    s1, s0 = switcher_cdf(ct, 1), switcher_cdf(ct, 0)
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any((qs <= 0) | (qs >= 1)):
        raise ValueError("quantile levels must lie strictly between 0 and 1")
    diag = {"violation_d0": s0.violation, "violation_d1": s1.violation}
    out = []
    for qq in qs:
        q1, q0 = float(s1.F.inverse(qq)), float(s0.F.inverse(qq))
        out.append(Estimate("lqte", q1 - q0, q=float(qq),
                            diagnostics=dict(diag, quantile_d1=q1, quantile_d0=q0)))
    return out[0] if np.ndim(q) == 0 else out


@dataclass(frozen=True)
class Decomposition:
    alpha: float
    regime: str
    interpretation: str

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "regime": self.regime, "interpretation": self.interpretation}


def did_decomposition(ct: CellTable) -> Decomposition:
    """alpha = (E(D_11) - E(D_10)) / DID_D, with W_DID = alpha*Delta + (1 - alpha)*Delta'."""
    require_two_group(ct)
    did_d = did_of(ct, "d")
    if abs(did_d) <= EPS_DENOM:
        raise WeakDesignError(f"DID of the treatment is {did_d:.3g}; alpha is undefined")
    alpha = first_stage_gap(ct) / did_d
    if abs(alpha - 1) <= 1e-12:
        regime, text = "stable", (
            "alpha = 1: the control group's treatment rate is stable and Wald-DID "
            "targets the LATE of treatment-group switchers")
    elif alpha > 1:
        regime, text = "weighted-difference", (
            f"alpha = {alpha:.4g} > 1: Wald-DID is a weighted difference of the "
            "switchers' LATEs in the two groups and can even have the wrong sign")
    else:
        regime, text = "weighted-average", (
            f"alpha = {alpha:.4g} < 1: Wald-DID is a weighted average of the "
            "switchers' LATEs in the two groups")
    return Decomposition(float(alpha), regime, text)
