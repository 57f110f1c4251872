"""Data-generating processes with closed-form treatment effects, and a Monte
Carlo harness built on them.

Latent model: (Z1, Z2) standard bivariate normal with correlation ``rho``,
V = Phi(Z2) ~ U(0, 1) and noise e = scale * Z1 (``gaussian``) or
scale * Phi(Z1) (``uniform``, bounded support). Treatment is
D = 1{V >= v_gt}. Outcomes are

    Y(0) = gamma_g + trend_t + shift_gt + e
    Y(1) = gamma_g + trend_t + shift_gt + treated_shift_gt + sigma1_t * e + a + b * V

Each row is an independent draw with its group and period sampled from the
share vectors, i.e. a repeated cross-section.
"""
from __future__ import annotations

import configparser
import dataclasses
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from .bounds import cic_bounds, tc_bounds
from .dataset import Dataset, build_cells
from .errors import ConfigError, FuzzyDidError
from .estimators import _num, wald_cic, wald_did, wald_tc
from .inference import BootstrapConfig, bootstrap


@dataclass(frozen=True)
class DgpConfig:
    n: int = 1000
    groups: tuple = (0, 1)
    periods: tuple = (0, 1)
    group_shares: tuple | None = None
    period_shares: tuple | None = None
    thresholds: tuple = ((0.5, 0.5), (0.7, 0.3))   # rows: groups, columns: periods
    gamma: tuple | None = None
    trend: tuple | None = None
    shift: tuple | None = None
    treated_shift: tuple | None = None
    sigma1: tuple | None = None
    a: float = 1.0
    b: float = 0.0
    rho: float = 0.0
    scale: float = 1.0
    noise: str = "gaussian"
    seed: int = 0
    quantiles: tuple = (0.25, 0.5, 0.75)

    def __post_init__(self):
        G, T = len(self.groups), len(self.periods)
        fix = object.__setattr__
        fix(self, "groups", tuple(int(g) for g in self.groups))
        fix(self, "periods", tuple(int(t) for t in self.periods))
        fix(self, "group_shares", _vec(self.group_shares, G, 1.0 / G, "group_shares"))
        fix(self, "period_shares", _vec(self.period_shares, T, 1.0 / T, "period_shares"))
        fix(self, "gamma", _vec(self.gamma, G, 0.0, "gamma"))
        fix(self, "trend", _vec(self.trend, T, 0.0, "trend"))
        fix(self, "sigma1", _vec(self.sigma1, T, 1.0, "sigma1"))
        fix(self, "thresholds", _mat(self.thresholds, G, T, None, "thresholds"))
        fix(self, "shift", _mat(self.shift, G, T, 0.0, "shift"))
        fix(self, "treated_shift", _mat(self.treated_shift, G, T, 0.0, "treated_shift"))
        fix(self, "quantiles", tuple(float(q) for q in self.quantiles))
        if self.n < 1:
            raise ConfigError("n must be positive")
        if len(set(self.groups)) != G or len(set(self.periods)) != T or T < 2:
            raise ConfigError("groups and periods must be distinct, with at least two periods")
        for name in ("group_shares", "period_shares"):
            v = np.array(getattr(self, name))
            if np.any(v < 0) or abs(v.sum() - 1) > 1e-9:
                raise ConfigError(f"{name} must be non-negative and sum to 1")
        th = np.array(self.thresholds)
        if np.any((th < 0) | (th > 1)):
            raise ConfigError("thresholds must lie in [0, 1]")
        if not -1 < self.rho < 1:
            raise ConfigError("rho must lie strictly between -1 and 1")
        if self.noise not in ("gaussian", "uniform"):
            raise ConfigError(f"noise must be 'gaussian' or 'uniform', not {self.noise!r}")
        if self.scale <= 0 or min(self.sigma1) <= 0:
            raise ConfigError("scale and sigma1 must be positive")

    def replace(self, **kw) -> "DgpConfig":
        return dataclasses.replace(self, **kw)

    def v(self, g, t) -> float:
        return self.thresholds[self.groups.index(g)][self.periods.index(t)]

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _vec(v, size, default, name):
    if v is None:
        return tuple([default] * size)
    v = tuple(float(x) for x in np.atleast_1d(v))
    if len(v) != size:
        raise ConfigError(f"{name} needs {size} entries, got {len(v)}")
    return v


def _mat(m, rows, cols, default, name):
    if m is None:
        if default is None:
            raise ConfigError(f"{name} is required")
        return tuple(tuple([default] * cols) for _ in range(rows))
    arr = np.array(m, dtype=float)
    if arr.shape != (rows, cols):
        raise ConfigError(f"{name} must be {rows} x {cols} (groups x periods), got {arr.shape}")
    return tuple(tuple(float(x) for x in row) for row in arr)


# ---------------------------------------------------------------- config files

_LISTS = {"groups", "periods", "group_shares", "period_shares", "gamma", "trend", "sigma1", "quantiles"}
_MATRICES = {"thresholds", "shift", "treated_shift"}
_INTS = {"n", "seed"}
_FLOATS = {"a", "b", "rho", "scale"}
_EXTRA = {"reps": int, "bootstrap": int, "level": float, "estimators": str}


def read_config(path) -> tuple:
    """Parse a ``key = value`` file into (DgpConfig, extra settings).

    Lists are comma separated; matrices separate rows with ``;``. ``#``
    starts a comment. Extra keys ``reps``, ``bootstrap``, ``level`` and
    ``estimators`` configure a Monte Carlo run.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), delimiters=("=",))
    try:
        parser.read_string("[dgp]\n" + path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path.name}: {exc.message}", hint="expected lines of the form key = value") from None
    kw, extra = {}, {}
    for key, value in parser["dgp"].items():
        try:
            if key in _LISTS:
                kw[key] = [float(x) for x in value.split(",")]
            elif key in _MATRICES:
                kw[key] = [[float(x) for x in row.split(",")] for row in value.split(";")]
            elif key in _INTS:
                kw[key] = int(value)
            elif key in _FLOATS:
                kw[key] = float(value)
            elif key == "noise":
                kw[key] = value
            elif key in _EXTRA:
                extra[key] = _EXTRA[key](value)
            else:
                raise ConfigError(f"{path.name}: unknown key {key!r}")
        except ValueError:
            raise ConfigError(f"{path.name}: cannot parse value {value!r} for {key!r}") from None
    return DgpConfig(**kw), extra


# ---------------------------------------------------------------- truth

def _noise_mean(cfg: DgpConfig, lo: float, hi: float) -> float:
    """E(e | V in [lo, hi))."""
    A, B = norm.ppf(lo), norm.ppf(hi)
    if cfg.noise == "gaussian":
        return cfg.scale * cfg.rho * (norm.pdf(A) - norm.pdf(B)) / (hi - lo)
    s = np.sqrt(2 - cfg.rho ** 2)
    val, _ = integrate.quad(lambda z: norm.cdf(cfg.rho * z / s) * norm.pdf(z), A, B)
    return cfg.scale * val / (hi - lo)


def _interval(cfg: DgpConfig, g, t0, t1):
    v0, v1 = cfg.v(g, t0), cfg.v(g, t1)
    return (min(v0, v1), max(v0, v1)) if v0 != v1 else None


def switcher_late(cfg: DgpConfig, g, t0, t1) -> float | None:
    """E(Y(1) - Y(0) | switcher of group g between t0 and t1, T = t1); None if nobody switches."""
    iv = _interval(cfg, g, t0, t1)
    if iv is None:
        return None
    lo, hi = iv
    gi, ti = cfg.groups.index(g), cfg.periods.index(t1)
    return float(cfg.a + cfg.b * (lo + hi) / 2 + cfg.treated_shift[gi][ti]
                 + (cfg.sigma1[ti] - 1) * _noise_mean(cfg, lo, hi))


def _cond_noise_cdf(cfg: DgpConfig, w, z):
    """P(e <= w | Z2 = z)."""
    s = np.sqrt(1 - cfg.rho ** 2)
    if cfg.noise == "gaussian":
        return norm.cdf((w / cfg.scale - cfg.rho * z) / s)
    u = np.clip(w / cfg.scale, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        return norm.cdf((norm.ppf(u) - cfg.rho * z) / s)


def switcher_quantiles(cfg: DgpConfig, g, t0, t1, qs) -> dict:
    """tau_q for the switchers of group g, as a difference of potential-outcome quantiles."""
    lo, hi = _interval(cfg, g, t0, t1)
    gi, ti = cfg.groups.index(g), cfg.periods.index(t1)
    base = cfg.gamma[gi] + cfg.trend[ti] + cfg.shift[gi][ti]
    lift = cfg.treated_shift[gi][ti] + cfg.a
    sig = cfg.sigma1[ti]
    if cfg.b == 0 and sig == 1:
        return {q: lift for q in qs}
    A, B = norm.ppf(lo), norm.ppf(hi)

    def cdf0(y):
        val, _ = integrate.quad(lambda z: _cond_noise_cdf(cfg, y - base, z) * norm.pdf(z), A, B)
        return val / (hi - lo)

    def cdf1(y):
        f = lambda z: _cond_noise_cdf(cfg, (y - base - lift - cfg.b * norm.cdf(z)) / sig, z) * norm.pdf(z)
        val, _ = integrate.quad(f, A, B)
        return val / (hi - lo)

    span = cfg.scale * 12 + abs(cfg.b) + abs(lift) + 1
    out = {}
    for q in qs:
        y0 = optimize.brentq(lambda y: cdf0(y) - q, base - span, base + span * max(1, sig), xtol=1e-12)
        y1 = optimize.brentq(lambda y: cdf1(y) - q, base - span * max(1, sig),
                             base + span * max(1, sig) + abs(cfg.b) + abs(lift), xtol=1e-12)
        out[q] = float(y1 - y0)
    return out


@dataclass(frozen=True)
class Truth:
    delta: float | None
    delta_prime: float | None
    alpha: float | None
    did_target: float | None
    tau: dict = field(default_factory=dict)
    delta_star: float | None = None
    w10: float | None = None

    def to_dict(self) -> dict:
        return {
            "delta": _num(self.delta), "delta_prime": _num(self.delta_prime),
            "alpha": _num(self.alpha), "did_target": _num(self.did_target),
            "tau": {f"{q:g}": _num(v) for q, v in sorted(self.tau.items())},
            "delta_star": _num(self.delta_star), "w10": _num(self.w10),
        }


def truth(cfg: DgpConfig) -> Truth:
    """Closed-form estimands for the last two periods.

    Two-group quantities (Delta, Delta', alpha, tau_q) are filled when the
    groups are exactly {0, 1}; Delta* and w_10 aggregate every changing group.
    """
    t0, t1 = cfg.periods[-2], cfg.periods[-1]
    delta = dprime = alpha = target = None
    tau = {}
    if set(cfg.groups) == {0, 1}:
        delta = switcher_late(cfg, 1, t0, t1)
        if delta is None:
            raise ConfigError("the treatment group has no switchers (v_10 = v_11); the LATE is undefined")
        dprime = switcher_late(cfg, 0, t0, t1)
        gap = cfg.v(1, t0) - cfg.v(1, t1)
        did_d = gap - (cfg.v(0, t0) - cfg.v(0, t1))
        if did_d != 0:
            alpha = float(gap / did_d)
            target = alpha * delta + (1 - alpha) * (dprime or 0.0)
        if cfg.quantiles:
            tau = switcher_quantiles(cfg, 1, t0, t1, cfg.quantiles)
    weights = {1: 0.0, -1: 0.0}
    num = 0.0
    for gi, g in enumerate(cfg.groups):
        late = switcher_late(cfg, g, t0, t1)
        if late is None:
            continue
        mass = cfg.group_shares[gi] * abs(cfg.v(g, t0) - cfg.v(g, t1))
        weights[1 if cfg.v(g, t1) < cfg.v(g, t0) else -1] += mass
        num += mass * late
    total = weights[1] + weights[-1]
    star = float(num / total) if total > 0 else None
    w10 = weights[1] / total if total > 0 else None
    return Truth(delta, dprime, alpha, target, tau, star, w10)


# ---------------------------------------------------------------- sampling

def generate(cfg: DgpConfig, rep: int | None = None) -> tuple:
    """Draw a dataset; returns (Dataset, Truth). ``rep`` derives an independent stream."""
    return sample(cfg, rep), truth(cfg)


def sample(cfg: DgpConfig, rep: int | None = None) -> Dataset:
    rng = np.random.default_rng(cfg.seed if rep is None else [cfg.seed, rep])
    n = cfg.n
    gi = rng.choice(len(cfg.groups), size=n, p=cfg.group_shares)
    ti = rng.choice(len(cfg.periods), size=n, p=cfg.period_shares)
    z2 = rng.standard_normal(n)
    z1 = cfg.rho * z2 + np.sqrt(1 - cfg.rho ** 2) * rng.standard_normal(n)
    V = norm.cdf(z2)
    e = cfg.scale * (z1 if cfg.noise == "gaussian" else norm.cdf(z1))
    th = np.array(cfg.thresholds)
    d = (V >= th[gi, ti]).astype(np.int64)
    base = (np.array(cfg.gamma)[gi] + np.array(cfg.trend)[ti] + np.array(cfg.shift)[gi, ti])
    y0 = base + e
    y1 = (base + np.array(cfg.treated_shift)[gi, ti] + np.array(cfg.sigma1)[ti] * e
          + cfg.a + cfg.b * V)
    y = np.where(d == 1, y1, y0)
    return Dataset(y, d, np.array(cfg.groups)[gi], np.array(cfg.periods)[ti])


# ---------------------------------------------------------------- Monte Carlo

def _estimate(kind: str, ct, stable_tol: float):
    if kind == "did":
        return wald_did(ct).point
    if kind == "tc":
        return wald_tc(ct, stable_tol).point
    if kind == "cic":
        return wald_cic(ct, stable_tol).point
    if kind == "tc_bounds":
        r = tc_bounds(ct)
        return (r.lower, r.upper)
    if kind == "cic_bounds":
        r = cic_bounds(ct, stable_tol=stable_tol)
        return (r.lower, r.upper)
    raise ValueError(f"unknown estimator {kind!r}")


@dataclass(frozen=True, eq=False)
class McReport:
    reps: int
    truth: Truth
    rows: dict
    estimates: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {"reps": self.reps, "truth": self.truth.to_dict(),
                "estimators": {k: self.rows[k] for k in sorted(self.rows)}}


def _two_period(ds: Dataset, cfg: DgpConfig) -> Dataset:
    t0, t1 = cfg.periods[-2], cfg.periods[-1]
    sub = ds.subset(np.isin(ds.t, (t0, t1)))
    return sub.replace(t=(sub.t == t1).astype(np.int64))


def monte_carlo(cfg: DgpConfig, reps: int, estimators=("did", "tc", "cic"), bootstrap_reps: int = 0,
                level: float = 0.95, stable_tol: float | None = None) -> McReport:
    """Repeat generate -> estimate ``reps`` times with seeds (cfg.seed, r).

    Point estimators are compared with Delta; ``*_bounds`` entries report how
    often the estimated interval contains Delta. With ``bootstrap_reps`` > 0
    every point estimator also gets a percentile interval from a shared
    bootstrap, and coverage is recorded.
    """
    if reps < 2:
        raise ConfigError("a Monte Carlo run needs at least 2 replications")
    tr = truth(cfg)
    if tr.delta is None:
        raise ConfigError("Monte Carlo targets need a two-group design with groups {0, 1}")
    if stable_tol is None:
        t0, t1 = cfg.periods[-2], cfg.periods[-1]
        stable_tol = np.inf if cfg.v(0, t0) == cfg.v(0, t1) else 0.0
    points = [k for k in estimators if not k.endswith("_bounds")]
    est = {k: np.full(reps, np.nan) if k in points else np.full((reps, 2), np.nan) for k in estimators}
    cover = {k: np.full(reps, np.nan) for k in points}
    length = {k: np.full(reps, np.nan) for k in points}
    failures = {k: 0 for k in estimators}
    for r in range(reps):
        ds = _two_period(sample(cfg, r), cfg)
        ct = build_cells(ds)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for k in estimators:
                try:
                    est[k][r] = _estimate(k, ct, stable_tol)
                except FuzzyDidError:
                    failures[k] += 1
        ok = [k for k in points if np.isfinite(est[k][r])]
        if bootstrap_reps and ok:
            bcfg = BootstrapConfig(reps=bootstrap_reps, seed=cfg.seed * 100_003 + r, level=level)
            stat = lambda x: [_estimate(k, build_cells(x), stable_tol) for k in ok]
            try:
                res = bootstrap(ds, stat, bcfg, point=[est[k][r] for k in ok])
            except FuzzyDidError:
                continue
            for j, k in enumerate(ok):
                cover[k][r] = float(res.ci_lo[j] <= tr.delta <= res.ci_hi[j])
                length[k][r] = res.ci_hi[j] - res.ci_lo[j]
    rows = {}
    for k in estimators:
        v = est[k]
        if k in points:
            good = v[np.isfinite(v)]
            bias = float(good.mean() - tr.delta) if good.size else None
            sd = float(good.std(ddof=1)) if good.size > 1 else None
            rows[k] = {
                "target": tr.delta, "mean": _num(good.mean()) if good.size else None,
                "bias": _num(bias), "sd": _num(sd),
                "mc_se": _num(sd / np.sqrt(good.size)) if sd is not None else None,
                "rmse": _num(np.sqrt(np.mean((good - tr.delta) ** 2))) if good.size else None,
                "coverage": _num(np.nanmean(cover[k])) if np.any(np.isfinite(cover[k])) else None,
                "mean_ci_length": _num(np.nanmean(length[k])) if np.any(np.isfinite(length[k])) else None,
                "failures": failures[k],
            }
        else:
            good = v[np.all(np.isfinite(v), axis=1)]
            inside = (good[:, 0] <= tr.delta) & (tr.delta <= good[:, 1])
            rows[k] = {
                "target": tr.delta,
                "contains": _num(inside.mean()) if good.size else None,
                "mean_lower": _num(good[:, 0].mean()) if good.size else None,
                "mean_upper": _num(good[:, 1].mean()) if good.size else None,
                "failures": failures[k],
            }
    return McReport(reps, tr, rows, est)
