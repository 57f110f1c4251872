"""Command-line front end: ``fuzzydid {estimate,bounds,placebo,classify,simulate}``.

Exit codes: 0 success, 1 usage error, 2 design or precondition error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import cic_bounds, tc_bounds
from .dataset import build_cells, check_design, load_table
from .errors import FuzzyDidError, UnstableControlError
from .estimators import did_decomposition, lqte, wald_cic, wald_did, wald_tc
from .inference import (
    BootstrapConfig, bootstrap, influence_cic, influence_did, influence_lqte, influence_tc,
    with_analytic, with_bootstrap,
)
from .multigroup import SupergroupMap, aggregate, classify_supergroups, split_sample
from .placebo import placebo_report
from .simulate import monte_carlo, read_config

POINT = {"did": wald_did, "tc": wald_tc, "cic": wald_cic}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(kind):
    def parse(text):
        vals = _floats(text)
        if len(vals) != 2:
            raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
        return [kind(v) for v in vals]
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fuzzydid", description="Fuzzy difference-in-differences estimation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp):
        sp.add_argument("--input", required=True, help="delimited micro-data with a header row")
        sp.add_argument("--sep", default=",", help="field delimiter (default ',')")
        for key in ("y", "d", "g", "t"):
            sp.add_argument(f"--{key}", default=key, help=f"column holding {key} (default {key!r})")
        sp.add_argument("--cluster", default=None, help="cluster id column; switches to cluster resampling")

    def infer_args(sp, default_b=999):
        sp.add_argument("--bootstrap", type=int, default=default_b, metavar="B",
                        help=f"bootstrap replications, 0 disables (default {default_b})")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--ci", choices=("percentile", "normal"), default="percentile")
        sp.add_argument("--level", type=float, default=0.95)
        sp.add_argument("--jobs", type=int, default=1, help="threads for bootstrap replicates")

    def out_args(sp):
        sp.add_argument("--format", choices=("json", "table"), default="json")
        sp.add_argument("--output", default=None, help="write the report here instead of stdout")

    sp = sub.add_parser("estimate", help="Wald-DID / Wald-TC / Wald-CIC and LQTEs")
    data_args(sp)
    sp.add_argument("--estimator", choices=("did", "tc", "cic", "all"), default="all")
    sp.add_argument("--quantiles", type=_floats, default=[], help="LQTE levels, e.g. 0.25,0.5,0.75")
    infer_args(sp)
    sp.add_argument("--inference", choices=("auto", "analytic", "bootstrap"), default="auto",
                    help="auto: analytic for did/tc, bootstrap for cic/lqte when B > 0")
    sp.add_argument("--stable-tol", type=float, default=0.0)
    sp.add_argument("--supergroups", default=None, metavar="auto|PATH",
                    help="pool many groups into supergroups, classified or read from a group,label file")
    sp.add_argument("--pvalue-threshold", type=float, default=0.5)
    sp.add_argument("--split-sample", action="store_true",
                    help="classify on odd-positioned rows, estimate on even-positioned rows")
    sp.add_argument("--export-map", default=None, help="write the supergroup map to this file")
    sp.add_argument("--export-replicates", default=None,
                    help="write bootstrap replicates of the first bootstrapped estimate")
    out_args(sp)

    sp = sub.add_parser("bounds", help="TC and CIC bounds when the control group is not stable")
    data_args(sp)
    sp.add_argument("--estimator", choices=("tc", "cic", "all"), default="all")
    sp.add_argument("--support", type=_pair(float), default=None, metavar="LO,HI")
    sp.add_argument("--quantiles", type=_floats, default=[])
    sp.add_argument("--stable-tol", type=float, default=0.0)
    infer_args(sp, default_b=0)
    out_args(sp)

    sp = sub.add_parser("placebo", help="pre-period placebo statistics")
    data_args(sp)
    sp.add_argument("--placebo-pair", type=_pair(int), default=None, metavar="T-,T0")
    infer_args(sp, default_b=199)
    out_args(sp)

    sp = sub.add_parser("classify", help="label groups as increasing, stable or decreasing")
    data_args(sp)
    sp.add_argument("--pvalue-threshold", type=float, default=0.5)
    sp.add_argument("--split-sample", action="store_true")
    sp.add_argument("--export-map", default=None)
    out_args(sp)

    sp = sub.add_parser("simulate", help="Monte Carlo study from a DGP config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--bootstrap", type=int, default=None, metavar="B")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--estimator", default=None, help="comma-separated list, e.g. did,tc,cic,tc_bounds")
    out_args(sp)
    return p


def _validate(args) -> None:
    if getattr(args, "bootstrap", None) is not None and args.bootstrap != 0 and args.bootstrap < 2:
        raise UsageError("--bootstrap must be 0 or at least 2")
    if hasattr(args, "level") and not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    if any(not 0 < q < 1 for q in getattr(args, "quantiles", [])):
        raise UsageError("--quantiles must lie strictly between 0 and 1")
    if getattr(args, "stable_tol", 0) < 0:
        raise UsageError("--stable-tol must be non-negative")
    if hasattr(args, "pvalue_threshold") and not 0 <= args.pvalue_threshold <= 1:
        raise UsageError("--pvalue-threshold must lie in [0, 1]")
    if args.command == "estimate" and args.split_sample and not args.supergroups:
        raise UsageError("--split-sample needs --supergroups")
    if args.command == "estimate" and args.supergroups and args.quantiles:
        raise UsageError("--quantiles is not available with --supergroups")
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be at least 1")
    if args.command == "simulate" and args.reps is not None and args.reps < 2:
        raise UsageError("--reps must be at least 2")


def _runspec(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())}


def _load(args):
    schema = {"y": args.y, "d": args.d, "g": args.g, "t": args.t, "cluster": args.cluster}
    return load_table(args.input, schema, sep=args.sep)


def _bcfg(args) -> BootstrapConfig:
    return BootstrapConfig(reps=args.bootstrap, seed=args.seed,
                           scheme="cluster" if args.cluster else "iid",
                           ci=args.ci, level=args.level, n_jobs=args.jobs)


def _two_period(ds):
    return ds.subset(np.isin(ds.t, (0, 1)))


# ---------------------------------------------------------------- commands

def cmd_estimate(args) -> dict:
    ds = _load(args)
    if args.supergroups:
        return _estimate_supergroups(args, ds)
    ds = _two_period(ds)
    ct = build_cells(ds)
    info = check_design(ct, args.stable_tol)
    kinds = ["did", "tc", "cic"] if args.estimator == "all" else [args.estimator]
    notes = []
    if not info.stable_control:
        blocked = [k for k in kinds if k != "did"] + (["lqte"] if args.quantiles else [])
        if blocked and args.estimator != "all":
            raise UnstableControlError(
                f"{', '.join(blocked)} need(s) a stable control group; its treatment shares "
                f"moved by more than --stable-tol={args.stable_tol:g}")
        for k in blocked:
            notes.append(f"{k} skipped: the control group's treatment distribution is not stable; "
                         "use `bounds`")
        kinds = ["did"]
    tol = args.stable_tol
    points = {k: POINT[k](ct) if k == "did" else POINT[k](ct, stable_tol=tol) for k in kinds}
    taus = lqte(ct, list(args.quantiles), stable_tol=tol) if args.quantiles and info.stable_control else []
    cluster = ds.cluster if args.cluster else None
    boot_kinds = []
    for k in kinds:
        analytic = args.inference == "analytic" or (
            args.inference == "auto" and (k in ("did", "tc") or args.bootstrap == 0))
        if analytic:
            try:
                iv = {"did": lambda: influence_did(ds, ct, points[k].point),
                      "tc": lambda: influence_tc(ds, ct, points[k].point, tol),
                      "cic": lambda: influence_cic(ds, ct, tol)}[k]()
                points[k] = with_analytic(points[k], iv, args.level, cluster)
            except FuzzyDidError as exc:
                notes.append(f"{k}: no analytic standard error ({exc})")
        elif args.bootstrap:
            boot_kinds.append(k)
    boot_q = []
    for j, e in enumerate(taus):
        if args.inference == "analytic" or args.bootstrap == 0:
            try:
                taus[j] = with_analytic(e, influence_lqte(ds, e.q, ct, tol), args.level, cluster)
            except FuzzyDidError as exc:
                notes.append(f"lqte({e.q:g}): no analytic standard error ({exc}; {exc.hint})")
        else:
            boot_q.append(j)
    if boot_kinds or boot_q:
        qs = [taus[j].q for j in boot_q]

        # stability was checked on the full sample; replicates impose it
        def stat(x):
            c = build_cells(x)
            out = [POINT[k](c) if k == "did" else POINT[k](c, stable_tol=np.inf) for k in boot_kinds]
            out = [e.point for e in out]
            if qs:
                out += [e.point for e in lqte(c, qs, stable_tol=np.inf)]
            return out

        res = bootstrap(ds, stat, _bcfg(args),
                        point=[points[k].point for k in boot_kinds] + [taus[j].point for j in boot_q])
        for j, k in enumerate(boot_kinds):
            points[k] = with_bootstrap(points[k], res, j)
        for i, j in enumerate(boot_q):
            taus[j] = with_bootstrap(taus[j], res, len(boot_kinds) + i)
        if res.failures:
            notes.append(f"{res.failures} bootstrap replicates failed and were dropped: {res.census}")
        if args.export_replicates:
            res.export(args.export_replicates)
    design = dict(info.to_dict(), mode="two-group", n=len(ds),
                  decomposition=did_decomposition(ct).to_dict())
    return {
        "design": design,
        "estimates": [points[k].to_dict() for k in kinds] + [e.to_dict() for e in taus],
        "notes": notes,
    }


def _supergroup_map(args, ds):
    if args.supergroups == "auto":
        return classify_supergroups(ds, args.pvalue_threshold)
    return SupergroupMap.read(args.supergroups)


def _estimate_supergroups(args, ds) -> dict:
    notes = []
    est_ds = ds
    if args.split_sample:
        cls_ds, est_ds = split_sample(ds)
        smap = _supergroup_map(args, cls_ds)
    else:
        smap = _supergroup_map(args, ds)
    if args.export_map:
        smap.write(args.export_map)
    est_ds = _two_period(est_ds)
    kinds = ["did", "tc", "cic"] if args.estimator == "all" else [args.estimator]
    out = []
    for k in kinds:
        agg = aggregate(est_ds, smap, k)
        if args.bootstrap:
            cfg = _bcfg(args)
            res = bootstrap(est_ds, lambda x: aggregate(x, smap, k).point, cfg, point=agg.point)
            agg = agg.with_inference(float(res.se[0]), (float(res.ci_lo[0]), float(res.ci_hi[0]), cfg.level),
                                     "bootstrap")
            if res.failures:
                notes.append(f"{k}: {res.failures} bootstrap replicates failed: {res.census}")
        out.append(agg.to_dict())
    notes.append("standard errors do not account for the estimation of the supergroups")
    return {
        "design": {"mode": "supergroups", "n": len(est_ds), "split_sample": bool(args.split_sample)},
        "estimates": out,
        "supergroups": smap.to_dict(),
        "notes": notes,
    }


def cmd_bounds(args) -> dict:
    ds = _two_period(_load(args))
    ct = build_cells(ds)
    info = check_design(ct, args.stable_tol)
    kinds = ["tc", "cic"] if args.estimator == "all" else [args.estimator]
    support = args.support

    def compute(c, k):
        if k == "tc":
            return tc_bounds(c, support)
        return cic_bounds(c, args.quantiles, support, stable_tol=args.stable_tol)

    results, notes = [], []
    for k in kinds:
        r = compute(ct, k)
        if args.bootstrap:
            res = bootstrap(ds, lambda x: (lambda b: [b.lower, b.upper])(compute(build_cells(x), k)),
                            _bcfg(args), point=[r.lower, r.upper])
            r = dataclasses.replace(
                r, lower_ci=(float(res.ci_lo[0]), float(res.ci_hi[0]), args.level),
                upper_ci=(float(res.ci_lo[1]), float(res.ci_hi[1]), args.level))
        results.append(r.to_dict())
        if not (math.isfinite(r.lower) and math.isfinite(r.upper)):
            notes.append(f"{k} bounds are infinite (reported as null): the bound cdfs put mass "
                         "on an unbounded support endpoint")
    return {"design": dict(info.to_dict(), mode="two-group", n=len(ds)), "estimates": [],
            "bounds": results, "notes": notes}


def cmd_placebo(args) -> dict:
    ds = _load(args)
    cfg = _bcfg(args) if args.bootstrap else None
    rep = placebo_report(ds, args.placebo_pair, cfg)
    return {"design": {"mode": "placebo", "n": len(ds)}, "estimates": [],
            "placebo": rep.to_dict(), "notes": list(rep.notes)}


def cmd_classify(args) -> dict:
    ds = _load(args)
    if args.split_sample:
        ds, _ = split_sample(ds)
    smap = classify_supergroups(ds, args.pvalue_threshold)
    if args.export_map:
        smap.write(args.export_map)
    return {"design": {"mode": "classify", "n": len(ds)}, "estimates": [],
            "supergroups": smap.to_dict(), "notes": list(smap.notes)}


def cmd_simulate(args) -> dict:
    cfg, extra = read_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    reps = args.reps if args.reps is not None else extra.get("reps", 100)
    boot = args.bootstrap if args.bootstrap is not None else extra.get("bootstrap", 0)
    kinds = args.estimator or extra.get("estimators", "did,tc,cic")
    kinds = tuple(k.strip() for k in kinds.split(",") if k.strip())
    allowed = {"did", "tc", "cic", "tc_bounds", "cic_bounds"}
    if not set(kinds) <= allowed:
        raise UsageError(f"unknown estimator(s) {sorted(set(kinds) - allowed)}")
    if reps < 2:
        raise UsageError("--reps must be at least 2")
    rep = monte_carlo(cfg, reps, kinds, bootstrap_reps=boot, level=extra.get("level", 0.95))
    return {"estimates": [], "mc": dict(rep.to_dict(), config=cfg.to_dict()), "notes": []}


COMMANDS = {"estimate": cmd_estimate, "bounds": cmd_bounds, "placebo": cmd_placebo,
            "classify": cmd_classify, "simulate": cmd_simulate}


# ---------------------------------------------------------------- output

def _clean(obj):
    """Make the report JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def render_json(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.6g}"


def render_table(report: dict) -> str:
    lines = []
    design = report.get("design") or {}
    if design:
        lines.append(f"design: {design.get('mode')}  n = {design.get('n')}")
        if "decomposition" in design:
            lines.append(f"  alpha = {_fmt(design['decomposition']['alpha'])}  "
                         f"({design['decomposition']['regime']})")
    if report.get("estimates"):
        lines.append(f"{'estimator':<14}{'point':>12}{'se':>12}{'ci_lo':>12}{'ci_hi':>12}  method")
        for e in report["estimates"]:
            name = e["kind"] if "q" not in e else f"{e['kind']}({e['q']:g})"
            ci = e.get("ci") or {}
            lines.append(f"{name:<14}{_fmt(e['point']):>12}{_fmt(e.get('se')):>12}"
                         f"{_fmt(ci.get('lo')):>12}{_fmt(ci.get('hi')):>12}  {e.get('method') or '-'}")
    for b in report.get("bounds", []):
        lines.append(f"{b['method']} bounds: [{_fmt(b['lower'])}, {_fmt(b['upper'])}]"
                     f"  support [{_fmt(b['support'][0])}, {_fmt(b['support'][1])}]")
        for q in b["quantiles"]:
            lines.append(f"  tau({q['q']:g}): [{_fmt(q['lower'])}, {_fmt(q['upper'])}]")
    if "placebo" in report:
        p = report["placebo"]
        lines.append(f"placebo pair {p['pair']}  informative = {p['informative']}")
        for t in p["tests"]:
            name = t["test"] if "d" not in t else f"trend(d={t['d']})"
            lines.append(f"  {name:<14}{_fmt(t['statistic']):>12}{_fmt(t['se']):>12}{_fmt(t['t']):>10}")
    if "supergroups" in report:
        lines.append("group  label  p-value   change")
        for row in report["supergroups"]["groups"]:
            lines.append(f"{row['group']:>5}  {row['label']:>5}  {_fmt(row['pvalue']):>7}  {_fmt(row['change']):>7}")
    if "mc" in report:
        mc = report["mc"]
        lines.append(f"Monte Carlo, R = {mc['reps']}, Delta = {_fmt(mc['truth']['delta'])}")
        for k, row in mc["estimators"].items():
            lines.append("  " + k + ": " + ", ".join(f"{a}={_fmt(v) if not isinstance(v, int) else v}"
                                                     for a, v in row.items()))
    for note in report.get("notes", []):
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
    except UsageError as exc:
        print(f"fuzzydid: usage error: {exc}", file=sys.stderr)
        return 1
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = COMMANDS[args.command](args)
        report.setdefault("notes", [])
        for w in caught:
            msg = str(w.message)
            if msg not in report["notes"]:
                report["notes"].append(msg)
    except UsageError as exc:
        print(f"fuzzydid: usage error: {exc}", file=sys.stderr)
        return 1
    except FuzzyDidError as exc:
        print(f"fuzzydid: error in {exc.module}: {exc}", file=sys.stderr)
        if exc.hint:
            print(f"hint: {exc.hint}", file=sys.stderr)
        return 2
    report["runspec"] = _runspec(args)
    text = render_json(report) if args.format == "json" else render_table(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())
