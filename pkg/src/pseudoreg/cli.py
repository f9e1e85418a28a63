"""Command-line surface: pseudo / fit / test / simulate / veteran-demo.

Every artifact-producing run (one with ``--out``) also writes a
``<out>.manifest.json`` run manifest carrying the resolved configuration,
seed, version, input digests and wall time, sufficient to reproduce the run.

Exit codes: 0 success, 2 validation/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import __version__
from . import bootstrap as bs
from . import covariance as cov
from . import data_model as dm
from . import gee
from . import pseudo as ps
from . import simulation as sim
from .errors import (
    BootstrapUnstableError,
    ConditioningError,
    DegenerateDesignError,
    EstimandUndefinedError,
    HypothesisError,
    LeverageError,
    NonconvergenceError,
    OracleError,
    ParseError,
    SchemaError,
    ValidationError,
)
from .functional import KM, km_value
from .inference import Hypothesis, run_test

VALIDATION_ERRORS = (SchemaError, ParseError, ValidationError, HypothesisError)
NUMERICAL_ERRORS = (
    DegenerateDesignError,
    EstimandUndefinedError,
    NonconvergenceError,
    ConditioningError,
    LeverageError,
    BootstrapUnstableError,
    OracleError,
)


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config: dict
    seed: object
    version: str
    input_digests: dict
    wall_time_s: float


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(args, out_path, started, inputs, extra_config=None):
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func",) and not k.startswith("_")
    }
    if extra_config:
        config.update(extra_config)
    manifest = RunManifest(
        subcommand=args.subcommand,
        config=config,
        seed=getattr(args, "seed", None),
        version=__version__,
        input_digests={p: _digest(p) for p in inputs if p and os.path.exists(p)},
        wall_time_s=round(time.time() - started, 3),
    )
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, default=str)
        fh.write("\n")


def _resolve_data(path):
    if path == "veteran":
        return str(resources.files("pseudoreg").joinpath("data/veteran.csv"))
    return path


def _load(args):
    path = _resolve_data(args.data)
    schema = dm.ColumnSchema(time=args.time, status=args.status)
    dataset = dm.load_csv(path, schema)
    spec = dm.parse_design(args.design, dataset)
    design = dm.encode_design(dataset, spec)
    return path, dataset, design


def _emit(args, human_lines, payload, csv_rows=None, csv_header=None):
    if args.json:
        text = json.dumps(payload, indent=2, default=str) + "\n"
    elif args.csv:
        if csv_rows is None:
            raise ValidationError("this subcommand has no CSV representation")
        import io

        buf = io.StringIO()
        writer = csv_mod.writer(buf)
        writer.writerow(csv_header)
        writer.writerows(csv_rows)
        text = buf.getvalue()
    else:
        text = "\n".join(human_lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_pseudo(args):
    started = time.time()
    path, dataset, _ = _load(args)
    pv = ps.jackknife_pseudo(dataset.distribution(), KM, args.t0)
    rows = [(k, v) for k, v in enumerate(pv.values)]
    human = [f"pseudo-values at t0={args.t0} (KM functional), n={pv.n}"]
    human += [f"{k:6d}  {v: .10f}" for k, v in rows]
    human.append(f"  mean  {pv.values.mean(): .10f}")
    _emit(args, human,
          {"t0": args.t0, "values": pv.values.tolist(),
           "mean": pv.values.mean()},
          csv_rows=rows, csv_header=("index", "pseudo_value"))
    if args.out:
        _write_manifest(args, args.out, started, [path])
    return 0


def _fit_pipeline(args):
    path, dataset, design = _load(args)
    model = gee.MeanModel(args.link, args.a)
    dist = dataset.distribution()
    pv = ps.jackknife_pseudo(dist, KM, args.t0)
    fit = gee.solve(model, design.rows, pv.values)
    return path, dataset, design, dist, model, pv, fit


def _covariances(kinds, fit, design, model, dist, t0):
    out = {}
    for kind in kinds:
        out[kind] = cov.estimate(kind, fit, design.rows, model,
                                 functional=KM, t0=t0, dist=dist)
    return out


def cmd_fit(args):
    started = time.time()
    path, dataset, design, dist, model, pv, fit = _fit_pipeline(args)
    kinds = ("hw", "hc3", "pv") if args.cov == "all" else (args.cov,)
    covs = _covariances(kinds, fit, design, model, dist, args.t0)
    n = dataset.n
    human = []
    if args.verbose:
        human.append(f"n={n}, events={int(dataset.events.sum())}, "
                     f"KM({args.t0:g}) = {km_value(dist, args.t0):.6f}")
        human.append(f"converged in {fit.iterations} iterations, "
                     f"|U/n| = {fit.residual_norm:.2e}")
    header = "variable            coefficient" + "".join(
        f"   se({k})" for k in kinds
    )
    human.append(header)
    for j, name in enumerate(design.columns):
        ses = "".join(f"  {covs[k].std_errors(n)[j]:8.4f}" for k in kinds)
        human.append(f"{name:<20s} {fit.beta[j]:10.4f}{ses}")
    payload = {
        "t0": args.t0, "link": args.link, "a": args.a,
        "columns": list(design.columns),
        "beta": fit.beta.tolist(),
        "km": km_value(dist, args.t0),
        "iterations": fit.iterations,
        "std_errors": {k: covs[k].std_errors(n).tolist() for k in kinds},
    }
    csv_rows = [
        (name, fit.beta[j], *(covs[k].std_errors(n)[j] for k in kinds))
        for j, name in enumerate(design.columns)
    ]
    _emit(args, human, payload, csv_rows=csv_rows,
          csv_header=("variable", "coefficient", *(f"se_{k}" for k in kinds)))
    if args.out:
        _write_manifest(args, args.out, started, [path])
    return 0


def load_hypothesis(path, q):
    """Text format: rows of C (whitespace-separated), a line '|', then b."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if "|" not in lines:
        raise ParseError(f"hypothesis file {path} is missing the '|' separator")
    split = lines.index("|")
    try:
        c = np.array([[float(x) for x in ln.split()] for ln in lines[:split]])
        b = np.array([float(x) for ln in lines[split + 1:] for x in ln.split()])
    except ValueError as exc:
        raise ParseError(f"non-numeric entry in hypothesis file {path}") from exc
    if c.ndim != 2 or c.shape[1] != q:
        raise HypothesisError(
            f"hypothesis C has shape {c.shape}, expected (*, {q})"
        )
    return Hypothesis(c, b, label=os.path.basename(path))


def preset_hypothesis(name, q):
    if name == "veteran-trt":
        c = np.zeros((1, q))
        c[0, 1] = 1.0
        return Hypothesis(c, np.zeros(1), "no treatment effect")
    if name == "veteran-celltype":
        c = np.zeros((3, q))
        c[0, 2] = c[1, 3] = c[2, 4] = 1.0
        return Hypothesis(c, np.zeros(3), "no celltype effect")
    raise ValidationError(f"unknown hypothesis preset {name!r}")


def cmd_test(args):
    started = time.time()
    path, dataset, design, dist, model, pv, fit = _fit_pipeline(args)
    q = design.q
    if args.hypothesis:
        hyp = load_hypothesis(args.hypothesis, q)
    elif args.preset:
        hyp = preset_hypothesis(args.preset, q)
    else:
        raise ValidationError("test needs --hypothesis <file> or --preset <name>")
    covariance = cov.estimate(args.cov, fit, design.rows, model,
                              functional=KM, t0=args.t0, dist=dist)
    if args.bootstrap:
        cfg = bs.BootstrapConfig(b=args.bootstrap, alpha=args.alpha,
                                 standardization=args.standardize,
                                 seed=args.seed)
        result = bs.bootstrap_test(fit, covariance, hyp, cfg,
                                   design=design.rows, model=model)
    else:
        result = run_test(fit, covariance, hyp, args.alpha)
    human = [
        f"hypothesis: {hyp.label}  (p={hyp.p}, rank used: {result.rank_c})",
        f"method: {result.method} ({args.cov} covariance"
        + (f", B={args.bootstrap}, standardize={args.standardize}"
           if args.bootstrap else "") + ")",
        f"statistic = {result.statistic:.4f}",
        f"critical value ({1-args.alpha:.0%}) = {result.critical_value:.4f}",
        f"p-value = {result.p_value:.4g}",
        f"reject H0 at alpha={args.alpha:g}: {'yes' if result.reject else 'no'}",
    ]
    payload = {
        "label": hyp.label, "method": result.method, "cov": args.cov,
        "statistic": result.statistic, "rank": result.rank_c,
        "p_value": result.p_value, "alpha": result.alpha,
        "critical_value": result.critical_value, "reject": result.reject,
    }
    _emit(args, human, payload,
          csv_rows=[tuple(payload.values())],
          csv_header=tuple(payload.keys()))
    if args.out:
        _write_manifest(args, args.out, started, [path, args.hypothesis])
    return 0


def cmd_simulate(args):
    started = time.time()
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    scenarios = raw["scenarios"] if isinstance(raw, dict) else raw
    threads = args.threads or int(os.environ.get("PSEUDOREG_THREADS", "1"))
    results = []
    for i, entry in enumerate(scenarios):
        entry = dict(entry)
        if str(entry.get("vartheta", "inf")).lower() in ("inf", "infinity"):
            entry["vartheta"] = math.inf
        entry.setdefault("scenario_id", i)
        if args.seed is not None:
            entry["base_seed"] = args.seed
        if "tests" in entry:
            entry["tests"] = tuple(entry["tests"])
        config = sim.ScenarioConfig(**entry)
        print(f"running scenario {config.scenario_id}: n={config.n}, "
              f"vartheta={config.vartheta}, deltas=({config.delta1},"
              f"{config.delta2}), n_sim={config.n_sim}", flush=True)
        results.append(sim.run_scenario(config, threads=threads,
                                        progress=args.progress))
    rows = sim.aggregate(results)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv_mod.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(args, args.out, started, [args.config],
                    extra_config={"threads": threads})
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_veteran_demo(args):
    started = time.time()
    path = _resolve_data("veteran")
    dataset = dm.load_csv(path, dm.veteran_schema())
    design = dm.encode_design(dataset, dm.veteran_design_spec())
    dist = dataset.distribution()
    model = gee.MeanModel("logit", "dmu")
    pv = ps.jackknife_pseudo(dist, KM, 90.0)
    fit = gee.solve(model, design.rows, pv.values)
    covs = _covariances(("pv", "hw", "hc3"), fit, design, model, dist, 90.0)
    n = dataset.n
    human = [
        "Pseudo-observation regression, 90-day survival "
        f"(n={n}, logit link, A = dmu/dbeta)",
        "",
        f"{'Variable':<20s}{'Coefficient':>12s}{'SE(PV)':>10s}"
        f"{'SE(HW)':>10s}{'SE(HC3)':>10s}",
    ]
    for j, name in enumerate(design.columns):
        human.append(
            f"{name:<20s}{fit.beta[j]:12.3f}"
            + "".join(f"{covs[k].std_errors(n)[j]:10.3f}"
                      for k in ("pv", "hw", "hc3"))
        )
    human.append("")
    tests = {}
    for label, preset in (("H0(1): no treatment effect", "veteran-trt"),
                          ("H0(2): no celltype effect", "veteran-celltype")):
        hyp = preset_hypothesis(preset, design.q)
        line = f"{label:<28s}"
        for k in ("pv", "hw", "hc3"):
            res = run_test(fit, covs[k], hyp)
            tests[(label, k)] = res
            line += (f"  {k.upper()}: t({res.rank_c})={res.statistic:.3f}"
                     f" p={res.p_value:.3f}")
        human.append(line)
    payload = {
        "columns": list(design.columns),
        "beta": fit.beta.tolist(),
        "std_errors": {k: covs[k].std_errors(n).tolist() for k in covs},
        "tests": {
            f"{label} [{k}]": {"statistic": r.statistic, "rank": r.rank_c,
                               "p_value": r.p_value}
            for (label, k), r in tests.items()
        },
    }
    _emit(args, human, payload)
    if args.out:
        _write_manifest(args, args.out, started, [path])
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_common(p, with_model=True):
    p.add_argument("--data", required=True,
                   help="CSV path, or 'veteran' for the bundled fixture")
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--time", default="time")
    p.add_argument("--status", default="status")
    p.add_argument("--design", default=dm.VETERAN_FORMULA,
                   help="design formula, e.g. 'trt(ref=1)+age+x:y'")
    if with_model:
        p.add_argument("--link", default="logit",
                       choices=("identity", "logit", "cloglog"))
        p.add_argument("--a", default="dmu", choices=("dmu", "design"))
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--out", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pseudoreg",
        description="pseudo-observation survival regression",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("pseudo", help="jackknife pseudo-values")
    _add_common(p, with_model=False)
    p.set_defaults(func=cmd_pseudo)

    p = sub.add_parser("fit", help="fit the regression model")
    _add_common(p)
    p.add_argument("--cov", default="all", choices=("hw", "hc3", "pv", "all"))
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="Wald-type hypothesis test")
    _add_common(p)
    p.add_argument("--cov", default="pv", choices=("hw", "hc3", "pv"))
    p.add_argument("--hypothesis", default=None,
                   help="text file: rows of C, a '|' line, then b")
    p.add_argument("--preset", default=None,
                   choices=("veteran-trt", "veteran-celltype"))
    p.add_argument("--bootstrap", type=int, default=None, metavar="B")
    p.add_argument("--standardize", default="hw", choices=("hw", "hc3"))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="Monte-Carlo scenario grid")
    p.add_argument("--config", required=True, help="JSON scenario config")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--progress", type=int, default=None, metavar="EVERY")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("veteran-demo",
                       help="reproduce the bundled 90-day survival analysis")
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_veteran_demo)
    return parser


def dispatch(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"pseudoreg: validation error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"pseudoreg: numerical failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"pseudoreg: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch())
