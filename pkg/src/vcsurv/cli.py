"""Command-line front end: fit, simulate, bench, and baseline subcommands.

Every subcommand is pure in its inputs and seed: rerunning with the same
arguments reproduces output files byte for byte.  A key = value config
file can supply any long flag (without the leading dashes); flags given
on the command line win.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from scipy.stats import norm

from .baseline import breslow, smooth_hazard
from .bench import report_plan, run_plan, table1_plan, table2_plan, table3_plan
from .data import load_dataset
from .errors import DataError, NumericalError
from .fitting import FitOptions, default_grid, fit_curve
from .inference import curve_standard_errors, residual_increments
from .kernels import get_kernel
from .simulate import set1_scenario, set2_scenario, simulate_dataset

__all__ = ["main", "build_parser", "hazard_ratio_ci", "resolve_bandwidth"]


class UsageError(Exception):
    """Bad command line or config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv_cell(x) -> str:
    if isinstance(x, float):
        return "NA" if not np.isfinite(x) else repr(x)
    return str(x)


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(x) for x in row) + "\n")


def _write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def hazard_ratio_ci(beta: float, se: float, z: float):
    """exp-transformed point estimate and confidence bounds.

    beta = 0 with standard error s gives HR 1.0 with bounds
    (exp(-z s), exp(z s)).
    """
    if not np.isfinite(se):
        return float(np.exp(beta)), float("nan"), float("nan")
    return (
        float(np.exp(beta)),
        float(np.exp(beta - z * se)),
        float(np.exp(beta + z * se)),
    )


def resolve_bandwidth(args, ds) -> float:
    """Absolute --h, or --h-frac x (max V - min V) over the loaded data."""
    if (args.h is None) == (args.h_frac is None):
        raise UsageError(f"{args.prog}: exactly one of --h or --h-frac is required")
    if args.h is not None:
        h = float(args.h)
    else:
        lo, hi = ds.v_range
        h = float(args.h_frac) * (hi - lo)
    if not h > 0:
        raise UsageError(f"{args.prog}: resolved bandwidth must be positive, got {h!r}")
    return h


def _schema(args) -> dict:
    sch = {}
    for key in ("cluster", "member", "time", "status", "v"):
        val = getattr(args, f"col_{key}")
        if val is not None:
            sch[key] = val
    if args.col_z is not None:
        sch["z"] = [c.strip() for c in args.col_z.split(",") if c.strip()]
    return sch


def _add_data_flags(p: _Parser):
    p.add_argument("--data", required=True, help="input CSV of subject records")
    p.add_argument("--col-cluster", help="cluster id column name (default: cluster)")
    p.add_argument("--col-member", help="member type column name (default: member)")
    p.add_argument("--col-time", help="observed time column name (default: time)")
    p.add_argument("--col-status", help="event indicator column name (default: status)")
    p.add_argument("--col-v", help="index variable column name (default: v)")
    p.add_argument("--col-z", help="comma-separated covariate column names")


def _add_fit_flags(p: _Parser):
    p.add_argument("--h", type=float, help="absolute bandwidth")
    p.add_argument(
        "--h-frac",
        type=float,
        help="bandwidth as a fraction of the observed V range",
    )
    p.add_argument(
        "--kernel",
        choices=("gaussian", "epanechnikov"),
        default="gaussian",
        help="kernel for the local fits (default: gaussian)",
    )
    p.add_argument(
        "--grid-size",
        type=int,
        default=200,
        help="evaluation grid points (default: 200)",
    )
    p.add_argument(
        "--mode",
        choices=("full_newton", "one_step"),
        default="full_newton",
        help="fit every grid point fully, or propagate one-step updates",
    )
    p.add_argument(
        "--anchors",
        help="comma-separated grid indices fitted fully in one_step mode",
    )
    p.add_argument("--tau", type=float, help="restrict event-time integrals to [0, tau]")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="vcsurv",
        description=(
            "Local pseudo-partial likelihood estimation of varying-coefficient "
            "marginal hazard models on clustered failure-time data."
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_fit = sub.add_parser(
        "fit", help="fit coefficient curves on a CSV of subject records"
    )
    _add_data_flags(p_fit)
    _add_fit_flags(p_fit)
    p_fit.add_argument("--out-dir", required=True, help="output directory")
    p_fit.add_argument(
        "--confidence",
        type=float,
        default=0.95,
        help="pointwise confidence level (default: 0.95)",
    )
    p_fit.add_argument("--config", help="key = value file of flag defaults")
    p_fit.set_defaults(func=cmd_fit, prog="vcsurv fit")

    p_sim = sub.add_parser("simulate", help="draw a clustered failure-time dataset")
    p_sim.add_argument(
        "--preset",
        choices=("set1", "set2"),
        default="set1",
        help="scenario preset (default: set1)",
    )
    p_sim.add_argument("--n", type=int, default=200, help="clusters (default: 200)")
    p_sim.add_argument(
        "--theta", type=float, help="dependence parameter (preset default)"
    )
    p_sim.add_argument(
        "--censor-c", type=float, help="censoring upper bound (preset default)"
    )
    p_sim.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.add_argument(
        "--metadata",
        help="metadata JSON path (default: alongside --out with .json suffix)",
    )
    p_sim.add_argument("--config", help="key = value file of flag defaults")
    p_sim.set_defaults(func=cmd_simulate, prog="vcsurv simulate")

    p_bench = sub.add_parser("bench", help="run a Monte Carlo benchmark preset")
    p_bench.add_argument(
        "--preset",
        choices=("table1", "table2", "table3"),
        required=True,
        help="benchmark layout to run",
    )
    p_bench.add_argument("--reps", type=int, default=200, help="replications")
    p_bench.add_argument(
        "--master-seed", type=int, default=20260819, help="replication seed root"
    )
    p_bench.add_argument("--n", type=int, default=200, help="clusters per replication")
    p_bench.add_argument("--theta", type=float, help="dependence (preset default)")
    p_bench.add_argument(
        "--censor-c", type=float, help="censoring bound (preset default)"
    )
    p_bench.add_argument("--out-dir", required=True, help="output directory")
    p_bench.add_argument(
        "--format",
        choices=("csv", "text", "both"),
        default="csv",
        help="table rendering (default: csv)",
    )
    p_bench.add_argument(
        "--workers",
        type=int,
        default=os.cpu_count() or 1,
        help="parallel replications (default: available parallelism)",
    )
    p_bench.add_argument(
        "--checkpoint-dir",
        help="store per-replication results here and resume interrupted runs",
    )
    p_bench.add_argument(
        "--quiet", action="store_true", help="suppress progress on standard error"
    )
    p_bench.add_argument("--config", help="key = value file of flag defaults")
    p_bench.set_defaults(func=cmd_bench, prog="vcsurv bench")

    p_base = sub.add_parser(
        "baseline", help="estimate cumulative baseline hazards per member type"
    )
    _add_data_flags(p_base)
    _add_fit_flags(p_base)
    p_base.add_argument("--out", required=True, help="output CSV path")
    p_base.add_argument(
        "--smooth-grid",
        type=int,
        default=0,
        help="also write a kernel-smoothed hazard on this many time points",
    )
    p_base.add_argument(
        "--smooth-b",
        type=float,
        help="smoothing bandwidth (default: jump-time range / 20)",
    )
    p_base.add_argument("--config", help="key = value file of flag defaults")
    p_base.set_defaults(func=cmd_baseline, prog="vcsurv baseline")

    return parser


# ---------------------------------------------------------------------------
# config files


def _read_config(path: str) -> list:
    """Turn a key = value file into argv tokens (booleans become bare flags)."""
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    tokens = []
    with open(path) as fh:
        for num, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{num}: expected key = value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise UsageError(f"{path}:{num}: empty key")
            flag = "--" + key.replace("_", "-")
            value = value.strip("\"'")
            if value.lower() in ("true", "false"):
                if value.lower() == "true":
                    tokens.append(flag)
            else:
                tokens.extend([flag, value])
    return tokens


def _apply_config(argv: list) -> list:
    """Splice config tokens in after the subcommand so explicit flags win."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None or not argv:
        return argv
    return [argv[0]] + _read_config(path) + argv[1:]


# ---------------------------------------------------------------------------
# subcommands


def _load(args):
    ds = load_dataset(args.data, schema=_schema(args) or None)
    h = resolve_bandwidth(args, ds)
    try:
        grid = default_grid(ds, h, size=args.grid_size)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    anchors = None
    if args.anchors:
        try:
            anchors = [int(a) for a in args.anchors.split(",")]
        except ValueError as exc:
            raise UsageError(f"{args.prog}: --anchors takes integers: {exc}") from exc
    curve = fit_curve(
        ds,
        grid,
        h,
        kernel=get_kernel(args.kernel),
        opts=FitOptions(mode=args.mode),
        anchors=anchors,
        tau=args.tau,
    )
    if all(f is None for f in curve.fits):
        raise NumericalError(
            "no grid point admitted a local fit; widen the bandwidth or the grid"
        )
    return ds, h, curve


def cmd_fit(args) -> int:
    ds, h, curve = _load(args)
    residuals = residual_increments(ds, curve, clamp=True, tau=args.tau)
    singular = curve_standard_errors(ds, curve, residuals=residuals, tau=args.tau)
    if not 0.0 < args.confidence < 1.0:
        raise UsageError(f"{args.prog}: --confidence must be inside (0, 1)")
    z = float(norm.ppf(0.5 + args.confidence / 2.0))

    p = ds.p
    header = (
        ["v"]
        + [f"beta{q}" for q in range(1, p + 1)]
        + [f"se{q}" for q in range(1, p + 1)]
        + ["gprime", "g"]
        + [c for q in range(1, p + 1) for c in (f"beta{q}_lo", f"beta{q}_hi")]
        + [c for q in range(1, p + 1) for c in (f"hr{q}", f"hr{q}_lo", f"hr{q}_hi")]
    )
    rows = []
    for i in range(curve.grid.shape[0]):
        if curve.fits[i] is None:
            continue
        beta = curve.beta[i]
        se = curve.se_beta[i]
        row = [float(curve.grid[i])]
        row += [float(b) for b in beta]
        row += [float(s) for s in se]
        row += [float(curve.gprime[i]), float(curve.g[i])]
        for q in range(p):
            if np.isfinite(se[q]):
                row += [float(beta[q] - z * se[q]), float(beta[q] + z * se[q])]
            else:
                row += [float("nan"), float("nan")]
        for q in range(p):
            row += list(hazard_ratio_ci(float(beta[q]), float(se[q]), z))
        rows.append(row)

    os.makedirs(args.out_dir, exist_ok=True)
    _write_csv(os.path.join(args.out_dir, "curve.csv"), header, rows)
    lo, hi = curve.fitted_range if rows else (float("nan"), float("nan"))
    _write_json(
        os.path.join(args.out_dir, "summary.json"),
        {
            "input": args.data,
            "n_clusters": ds.n,
            "n_member_types": ds.J,
            "n_covariates": ds.p,
            "records": int(ds.present.sum()),
            "events": int(ds.status.sum()),
            "h": h,
            "h_frac": args.h_frac,
            "kernel": args.kernel,
            "mode": args.mode,
            "grid_size": args.grid_size,
            "grid_range": [float(curve.grid[0]), float(curve.grid[-1])],
            "fitted_range": [lo, hi],
            "confidence": args.confidence,
            "rows": len(rows),
            "gaps": [
                {"index": int(i), "v": float(curve.grid[i])} for i in curve.gaps
            ],
            "singular_se": [int(i) for i in singular],
            "anchors": [int(a) for a in curve.anchors],
        },
    )
    return 0


def cmd_simulate(args) -> int:
    make = set1_scenario if args.preset == "set1" else set2_scenario
    over = {"n": args.n, "seed": args.seed}
    if args.theta is not None:
        over["theta"] = args.theta
    if args.censor_c is not None:
        over["censor_c"] = args.censor_c
    scn = make(**over)
    ds = simulate_dataset(scn)

    header = ["cluster", "member", "time", "status", "v"] + [
        f"z{q}" for q in range(1, scn.p + 1)
    ]
    rows = []
    for i in range(ds.n):
        cid = ds.cluster_ids[i]
        cid = cid.item() if hasattr(cid, "item") else cid
        for j in range(ds.J):
            rows.append(
                [cid, j + 1, float(ds.time[i, j]), int(ds.status[i, j]),
                 float(ds.v[i, j])] + [float(x) for x in ds.z[i, j]]
            )
    _write_csv(args.out, header, rows)

    meta_path = args.metadata or os.path.splitext(args.out)[0] + ".json"
    _write_json(
        meta_path,
        {
            "preset": args.preset,
            "n_clusters": scn.n,
            "n_member_types": scn.J,
            "n_covariates": scn.p,
            "theta": scn.theta,
            "lambda_star": list(scn.lambda_star),
            "v_range": list(scn.v_range),
            "censor_c": scn.censor_c,
            "seed": scn.seed,
            "columns": header,
            "records": len(rows),
            "events": int(ds.status.sum()),
            "censored_fraction": float(1.0 - ds.status.mean()),
            "output": args.out,
        },
    )
    return 0


def cmd_bench(args) -> int:
    plans = {"table1": table1_plan, "table2": table2_plan, "table3": table3_plan}
    over = {"reps": args.reps, "master_seed": args.master_seed, "n": args.n}
    if args.theta is not None:
        over["theta"] = args.theta
    if args.censor_c is not None:
        over["censor_c"] = args.censor_c
    plan = plans[args.preset](**over)

    progress = None
    if not args.quiet:
        def progress(done, total):
            print(f"{plan.name}: replication {done}/{total}", file=sys.stderr)

    summaries = run_plan(
        plan,
        workers=max(1, args.workers),
        checkpoint_dir=args.checkpoint_dir,
        progress=progress,
    )

    os.makedirs(args.out_dir, exist_ok=True)
    formats = ("csv", "text") if args.format == "both" else (args.format,)
    written = []
    for fmt in formats:
        ext = "csv" if fmt == "csv" else "txt"
        for name, content in report_plan(plan, summaries, fmt).items():
            path = os.path.join(args.out_dir, f"{plan.name}_{name}.{ext}")
            with open(path, "w") as fh:
                fh.write(content)
            written.append(os.path.basename(path))
    _write_json(
        os.path.join(args.out_dir, f"{plan.name}_run.json"),
        {
            "preset": args.preset,
            "plan": plan.name,
            "reps": plan.reps,
            "master_seed": plan.master_seed,
            "estimators": [e.name for e in plan.estimators],
            "h_labels": [hs.label for hs in plan.h_values],
            "h_runs": [hs.run for hs in plan.h_values],
            "skips": {
                s.estimator: int(sum(st.skips for st in s.ase_stats))
                for s in summaries
            },
            "tables": sorted(written),
        },
    )
    return 0


def cmd_baseline(args) -> int:
    ds, h, curve = _load(args)
    header = ["member", "time", "increment", "cumulative"]
    rows = []
    steps = {}
    for j in range(1, ds.J + 1):
        step = breslow(ds, j, curve, tau=args.tau, clamp=True)
        steps[j] = step
        cum = step.cumulative
        for k in range(step.n_jumps):
            rows.append([j, float(step.times[k]), float(step.increments[k]),
                         float(cum[k])])
    _write_csv(args.out, header, rows)

    if args.smooth_grid > 0:
        sm_rows = []
        for j in range(1, ds.J + 1):
            step = steps[j]
            if step.n_jumps == 0:
                continue
            try:
                sm = smooth_hazard(step, get_kernel(args.kernel), b=args.smooth_b)
            except ValueError as exc:
                raise DataError(str(exc)) from exc
            ts = np.linspace(0.0, float(step.times[-1]), args.smooth_grid)
            rates = sm(ts)
            near = sm.near_boundary(ts)
            for t, r, nb in zip(ts, rates, near):
                sm_rows.append([j, float(t), float(r), int(nb)])
        root, ext = os.path.splitext(args.out)
        _write_csv(
            root + ".smoothed" + (ext or ".csv"),
            ["member", "time", "rate", "near_boundary"],
            sm_rows,
        )
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(argv)
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise UsageError("vcsurv: a subcommand is required (see --help)")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
