"""Monte Carlo evaluation harness for the local hazard estimators.

Runs an estimator over replicated copula simulations and aggregates two
kinds of evidence: probe-point statistics (bias, sampling SD, and mean
estimated SE at chosen values of the index variable) and whole-curve
accuracy (RASE, the square root of the average squared error over a
fixed evaluation grid, with ASE = RASE squared).  Replication r of a
run always draws from substream (master_seed, r), so results are
deterministic for any worker count and a run can be checkpointed per
replication and resumed.

Truth functions are injected alongside scenarios, never inferred from
data.  Local fits that do not exist (too little data near a probe, a
singular local information matrix) are counted as skips at that probe
or replication only, and every aggregate reports how many replications
actually contributed.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DataError, NumericalError
from .fitting import FitOptions, fit_curve, maximize_local
from .inference import local_variance, residual_increments
from .loclik import LocalDesign
from .multitype import fit_weighted_curve
from .simulate import SimScenario, set1_scenario, set2_scenario, simulate_dataset

__all__ = [
    "RaseValue",
    "rase",
    "TruthSet",
    "set1_truth",
    "set2_truth",
    "BandwidthSpec",
    "EstimatorSpec",
    "ProbeStat",
    "AseStat",
    "GridStat",
    "McSummary",
    "run_mc",
    "BenchPlan",
    "table1_plan",
    "table2_plan",
    "table3_plan",
    "run_plan",
    "report",
    "report_plan",
]

ESTIMATORS = ("pseudo_partial", "one_step", "weighted")


class RaseValue(NamedTuple):
    """RASE over the usable grid points, with the usage count."""

    value: float
    n_used: int
    n_skipped: int

    def __float__(self) -> float:
        return self.value

    @property
    def ase(self) -> float:
        return self.value**2


def rase(grid, estimate, truth_fn) -> RaseValue:
    """Square root of the average squared error over a grid.

    Grid points where the estimate is missing (NaN) are excluded from
    the average and counted in ``n_skipped``.  Raises DataError when no
    point is usable.
    """
    grid = np.asarray(grid, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if grid.shape != estimate.shape or grid.ndim != 1:
        raise DataError(
            f"grid and estimate must be 1-D of equal length, got "
            f"{grid.shape} and {estimate.shape}"
        )
    ok = np.isfinite(estimate)
    n_used = int(ok.sum())
    if n_used == 0:
        raise DataError("no grid points with estimates to average")
    err = estimate[ok] - np.asarray(truth_fn(grid[ok]), dtype=float)
    return RaseValue(
        value=float(np.sqrt(np.mean(err**2))),
        n_used=n_used,
        n_skipped=int(grid.shape[0] - n_used),
    )


@dataclass(frozen=True)
class TruthSet:
    """Closed-form target functions a benchmark scores against.

    gprime is the derivative of the shared shift; None drops that
    target from probe statistics and RASE.
    """

    beta: tuple
    gprime: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(self.beta))
        if not self.beta:
            raise DataError("truth set needs at least one coefficient function")


def set1_truth() -> TruthSet:
    return TruthSet(
        beta=(
            lambda v: 0.5 * v * (1.5 - v),
            lambda v: np.sin(2.0 * v),
        ),
        gprime=lambda v: 0.5 * np.exp(v - 1.5),
    )


def set2_truth() -> TruthSet:
    return TruthSet(
        beta=(lambda v: np.exp(2.0 * v - 1.0),),
        gprime=lambda v: 8.0 - 16.0 * v,
    )


class BandwidthSpec(NamedTuple):
    """A reported bandwidth label and the kernel SD the fit runs at.

    Most benchmarks run at the label itself.  Benchmarks whose labels
    follow the full-width convention (a label of 0.4 meaning a kernel
    whose +/- 2 SD support spans 0.4 on each side, as for an
    Epanechnikov window) run at half the label.
    """

    label: float
    run: float


def _as_bandwidths(h_values) -> tuple:
    out = []
    for h in h_values:
        if isinstance(h, BandwidthSpec):
            out.append(h)
        elif np.isscalar(h):
            out.append(BandwidthSpec(float(h), float(h)))
        else:
            lab, run = h
            out.append(BandwidthSpec(float(lab), float(run)))
    if not out:
        raise DataError("at least one bandwidth is required")
    for hs in out:
        if not hs.run > 0.0:
            raise DataError(f"bandwidth must be positive, got {hs.run!r}")
    return tuple(out)


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to benchmark and how to evaluate its curve.

    name: pseudo_partial (full Newton at every grid point), one_step
    (anchor-propagated single Newton updates), or weighted (per-type
    fits at type_bandwidth_factor x h combined with optimal weights).
    keep_curves stores per-grid-point estimates and SEs of every
    replication so that grid-averaged bias/SD/SE columns can be formed.
    """

    name: str
    grid_size: int = 200
    opts: FitOptions | None = None
    type_bandwidth_factor: float = 1.5
    keep_curves: bool = False

    def __post_init__(self):
        if self.name not in ESTIMATORS:
            raise DataError(
                f"estimator must be one of {', '.join(ESTIMATORS)}, got {self.name!r}"
            )
        if self.grid_size < 2:
            raise DataError("grid_size must be at least 2")


@dataclass(frozen=True)
class ProbeStat:
    """Cross-replication summary of one target function at one (v, h).

    count is the number of replications whose local fit existed; bias,
    sd and mse are over those.  se averages the estimated standard
    errors where one was computed (NaN when none were requested).
    """

    v: float
    h: float
    function: str
    bias: float
    sd: float
    se: float
    mse: float
    count: int
    skips: int


@dataclass(frozen=True)
class AseStat:
    """Cross-replication summary of curve ASE for one target at one h."""

    h: float
    h_run: float
    function: str
    mean: float
    median: float
    std: float
    count: int
    skips: int
    per_rep: np.ndarray

    @property
    def mean_rase(self) -> float:
        vals = self.per_rep[np.isfinite(self.per_rep)]
        return float(np.mean(np.sqrt(vals))) if vals.size else float("nan")


@dataclass(frozen=True)
class GridStat:
    """Grid-averaged absolute bias, sampling SD, and mean SE at one h.

    Formed per grid point across replications, then averaged over the
    points where at least two replications contributed.
    """

    h: float
    function: str
    abias: float
    sd: float
    se: float
    n_grid: int


@dataclass
class McSummary:
    """Aggregated Monte Carlo results for one scenario and estimator."""

    scenario: str
    estimator: str
    reps: int
    master_seed: int
    probes: tuple
    h_values: tuple
    functions: tuple
    probe_stats: list
    ase_stats: list
    grid_stats: list

    def probe(self, v: float, h: float, function: str) -> ProbeStat:
        for st in self.probe_stats:
            if (
                st.function == function
                and abs(st.v - v) < 1e-9
                and abs(st.h - h) < 1e-9
            ):
                return st
        raise KeyError(f"no probe statistic at v={v}, h={h} for {function!r}")

    def ase(self, h: float, function: str) -> AseStat:
        for st in self.ase_stats:
            if st.function == function and abs(st.h - h) < 1e-9:
                return st
        raise KeyError(f"no ASE statistic at h={h} for {function!r}")

    def grid(self, h: float, function: str) -> GridStat:
        for st in self.grid_stats:
            if st.function == function and abs(st.h - h) < 1e-9:
                return st
        raise KeyError(f"no grid statistic at h={h} for {function!r}")


def rep_seed(master_seed: int, rep: int) -> int:
    """Substream seed of replication ``rep`` under ``master_seed``."""
    return int(np.random.SeedSequence((int(master_seed), int(rep))).generate_state(1)[0])


def _function_names(scn: SimScenario, spec: EstimatorSpec, truth: TruthSet) -> tuple:
    if len(truth.beta) != scn.p:
        raise DataError(
            f"truth set has {len(truth.beta)} coefficient functions, "
            f"scenario has {scn.p} covariates"
        )
    names = [f"beta{q + 1}" for q in range(scn.p)]
    # the weighted estimator combines coefficient components only
    if truth.gprime is not None and spec.name != "weighted":
        names.append("gprime")
    return tuple(names)


def _columnwise_mean(arr: np.ndarray) -> np.ndarray:
    """Mean over axis 0 ignoring NaN; NaN for all-NaN columns, no warnings."""
    fin = np.isfinite(arr)
    counts = fin.sum(axis=0)
    sums = np.where(fin, arr, 0.0).sum(axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def _truth_columns(truth: TruthSet, functions, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    cols = []
    for fn in functions:
        f = truth.gprime if fn == "gprime" else truth.beta[int(fn[4:]) - 1]
        cols.append(np.asarray(f(points), dtype=float) * np.ones_like(points))
    return np.column_stack(cols) if cols else np.empty((points.shape[0], 0))


@dataclass
class _RepArrays:
    """Per-replication raw results, shaped for index-ordered reduction."""

    probe_est: np.ndarray  # (H, V, F)
    probe_se: np.ndarray  # (H, V, F)
    ase: np.ndarray  # (H, F)
    curve_est: np.ndarray  # (H, M, F) or (H, 0, F)
    curve_se: np.ndarray


def _curve_columns(curve, functions) -> np.ndarray:
    cols = []
    for fn in functions:
        if fn == "gprime":
            cols.append(np.asarray(curve.gprime, dtype=float))
        else:
            cols.append(np.asarray(curve.beta[:, int(fn[4:]) - 1], dtype=float))
    return np.column_stack(cols)


def _curve_se_columns(curve, functions) -> np.ndarray:
    cols = []
    for fn in functions:
        if fn == "gprime":
            src = getattr(curve, "se_gprime", None)
        else:
            src = curve.se_beta
            if src is not None:
                src = src[:, int(fn[4:]) - 1]
        if src is None:
            cols.append(np.full(curve.grid.shape[0], np.nan))
        else:
            cols.append(np.asarray(src, dtype=float))
    return np.column_stack(cols)


def _one_rep(
    scn: SimScenario,
    spec: EstimatorSpec,
    grid: np.ndarray,
    probes,
    h_specs,
    se_labels,
    truth: TruthSet,
    functions,
) -> _RepArrays:
    ds = simulate_dataset(scn)
    n_h, n_v, n_f = len(h_specs), len(probes), len(functions)
    m = grid.shape[0] if spec.keep_curves else 0
    out = _RepArrays(
        probe_est=np.full((n_h, n_v, n_f), np.nan),
        probe_se=np.full((n_h, n_v, n_f), np.nan),
        ase=np.full((n_h, n_f), np.nan),
        curve_est=np.full((n_h, m, n_f), np.nan),
        curve_se=np.full((n_h, m, n_f), np.nan),
    )
    for hi, hs in enumerate(h_specs):
        curve = None
        try:
            curve = _fit_estimator_curve(ds, spec, grid, hs.run)
        except (DataError, NumericalError):
            pass
        residuals = None
        if curve is not None:
            est_cols = _curve_columns(curve, functions)
            for fi, fn in enumerate(functions):
                truth_fn = (
                    truth.gprime if fn == "gprime" else truth.beta[int(fn[4:]) - 1]
                )
                try:
                    out.ase[hi, fi] = rase(grid, est_cols[:, fi], truth_fn).ase
                except DataError:
                    pass
            want_se = spec.keep_curves or (probes and hs.label in se_labels)
            if want_se and spec.name != "weighted":
                try:
                    residuals = residual_increments(ds, curve, clamp=True)
                except (DataError, NumericalError):
                    residuals = None
            if spec.keep_curves:
                out.curve_est[hi] = est_cols
                if spec.name == "weighted":
                    out.curve_se[hi] = _curve_se_columns(curve, functions)
                elif residuals is not None:
                    out.curve_se[hi] = _grid_se_columns(
                        ds, curve, residuals, functions
                    )
        for vi, v in enumerate(probes):
            _probe_into(out, hi, vi, ds, spec, curve, residuals, hs, v, se_labels)
    return out


def _fit_estimator_curve(ds, spec: EstimatorSpec, grid, h_run: float):
    if spec.name == "weighted":
        return fit_weighted_curve(
            ds,
            grid,
            h_run,
            opts=spec.opts,
            type_bandwidth_factor=spec.type_bandwidth_factor,
        )
    mode = "full_newton" if spec.name == "pseudo_partial" else "one_step"
    opts = dataclasses.replace(spec.opts or FitOptions(), mode=mode)
    return fit_curve(ds, grid, h_run, opts=opts)


def _grid_se_columns(ds, curve, residuals, functions) -> np.ndarray:
    m = curve.grid.shape[0]
    out = np.full((m, len(functions)), np.nan)
    for i in range(m):
        fit = curve.fits[i]
        if fit is None:
            continue
        design = LocalDesign(v=float(curve.grid[i]), h=curve.h, kernel=curve.kernel)
        try:
            parts = local_variance(ds, design, fit, residuals)
        except (DataError, NumericalError):
            continue
        out[i] = _se_row(parts, functions)
    return out


def _se_row(parts, functions) -> np.ndarray:
    row = np.full(len(functions), np.nan)
    slopes = parts.se_slopes()
    for fi, fn in enumerate(functions):
        row[fi] = slopes[-1] if fn == "gprime" else parts.se_beta[int(fn[4:]) - 1]
    return row


def _probe_into(out, hi, vi, ds, spec, curve, residuals, hs, v, se_labels):
    """One probe point of one replication; missing fits stay NaN."""
    n_f = out.probe_est.shape[2]
    if spec.name == "pseudo_partial":
        try:
            fit = maximize_local(ds, LocalDesign(v=float(v), h=hs.run))
        except (DataError, NumericalError):
            return
        vals = np.concatenate([fit.params.delta, [fit.params.gamma]])
        out.probe_est[hi, vi] = vals[:n_f] if n_f <= vals.shape[0] else vals
        if residuals is not None and hs.label in se_labels:
            try:
                parts = local_variance(
                    ds, LocalDesign(v=float(v), h=hs.run), fit, residuals
                )
            except (DataError, NumericalError):
                return
            functions = [f"beta{q + 1}" for q in range(ds.p)] + ["gprime"]
            out.probe_se[hi, vi] = _se_row(parts, functions)[:n_f]
        return
    if curve is None:
        return
    idx = int(np.argmin(np.abs(curve.grid - float(v))))
    if spec.name == "weighted":
        if np.isfinite(curve.beta[idx]).all():
            out.probe_est[hi, vi] = curve.beta[idx, :n_f]
            out.probe_se[hi, vi] = curve.se_beta[idx, :n_f]
        return
    fit = curve.fits[idx]
    if fit is None:
        return
    vals = np.concatenate([curve.beta[idx], [curve.gprime[idx]]])
    out.probe_est[hi, vi] = vals[:n_f]
    if residuals is not None and hs.label in se_labels:
        design = LocalDesign(v=float(curve.grid[idx]), h=hs.run, kernel=curve.kernel)
        try:
            parts = local_variance(ds, design, fit, residuals)
        except (DataError, NumericalError):
            return
        functions = [f"beta{q + 1}" for q in range(ds.p)] + ["gprime"]
        out.probe_se[hi, vi] = _se_row(parts, functions)[:n_f]


# ---------------------------------------------------------------------------
# checkpointing


def _manifest(scenario_label, spec, probes, h_specs, se_labels, functions, seed):
    return {
        "format": 1,
        "scenario": scenario_label,
        "estimator": spec.name,
        "grid_size": spec.grid_size,
        "keep_curves": spec.keep_curves,
        "type_bandwidth_factor": spec.type_bandwidth_factor,
        "master_seed": int(seed),
        "probes": [float(v) for v in probes],
        "h_labels": [hs.label for hs in h_specs],
        "h_runs": [hs.run for hs in h_specs],
        "se_h": sorted(se_labels),
        "functions": list(functions),
    }


def _checkpoint_load(path: str, manifest: dict) -> dict:
    os.makedirs(path, exist_ok=True)
    mpath = os.path.join(path, "manifest.json")
    if os.path.exists(mpath):
        with open(mpath) as fh:
            stored = json.load(fh)
        if stored != manifest:
            raise DataError(
                f"checkpoint at {path} was written by a different run "
                f"configuration; refusing to mix replications"
            )
    else:
        with open(mpath, "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
    done = {}
    for name in os.listdir(path):
        if name.startswith("rep_") and name.endswith(".npz"):
            r = int(name[4:-4])
            with np.load(os.path.join(path, name)) as z:
                done[r] = _RepArrays(
                    probe_est=z["probe_est"],
                    probe_se=z["probe_se"],
                    ase=z["ase"],
                    curve_est=z["curve_est"],
                    curve_se=z["curve_se"],
                )
    return done


def _checkpoint_save(path: str, r: int, arrs: _RepArrays):
    final = os.path.join(path, f"rep_{r:06d}.npz")
    fd, tmp = tempfile.mkstemp(dir=path, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(
                fh,
                probe_est=arrs.probe_est,
                probe_se=arrs.probe_se,
                ase=arrs.ase,
                curve_est=arrs.curve_est,
                curve_se=arrs.curve_se,
            )
        os.replace(tmp, final)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


# ---------------------------------------------------------------------------
# the harness


def run_mc(
    scn: SimScenario,
    spec: EstimatorSpec,
    reps: int,
    probes=(),
    h_values=(0.15,),
    master_seed: int = 0,
    *,
    truth: TruthSet | None = None,
    se_h=None,
    workers: int = 1,
    checkpoint_dir: str | None = None,
    progress: Callable | None = None,
    scenario_label: str | None = None,
) -> McSummary:
    """Benchmark one estimator over ``reps`` simulated replications.

    Replication r simulates from substream (master_seed, r), fits the
    estimator's curve on a fixed grid spanning the scenario's index
    range at every bandwidth, and (when probes are given) fits the
    probe points directly.  ``se_h`` limits which bandwidth labels get
    standard errors at the probes; None computes them at every
    bandwidth, () at none.  The reduction is by replication index, so
    the summary is identical for any ``workers`` count, and
    ``checkpoint_dir`` makes the run resumable per replication.
    """
    if reps < 1:
        raise DataError("reps must be at least 1")
    if not isinstance(spec, EstimatorSpec):
        spec = EstimatorSpec(name=str(spec))
    h_specs = _as_bandwidths(h_values)
    probes = tuple(float(v) for v in probes)
    truth = truth or TruthSet(beta=scn.beta_fns)
    functions = _function_names(scn, spec, truth)
    se_labels = (
        frozenset(hs.label for hs in h_specs)
        if se_h is None
        else frozenset(float(h) for h in se_h)
    )
    grid = np.linspace(scn.v_range[0], scn.v_range[1], spec.grid_size)
    label = scenario_label or (
        f"n={scn.n},J={scn.J},theta={scn.theta:g},c={scn.censor_c:g}"
    )

    done: dict[int, _RepArrays] = {}
    if checkpoint_dir is not None:
        manifest = _manifest(
            label, spec, probes, h_specs, sorted(se_labels), functions, master_seed
        )
        done = _checkpoint_load(checkpoint_dir, manifest)

    def compute(r: int) -> _RepArrays:
        scn_r = dataclasses.replace(scn, seed=rep_seed(master_seed, r))
        return _one_rep(scn_r, spec, grid, probes, h_specs, se_labels, truth, functions)

    todo = [r for r in range(reps) if r not in done]
    results: dict[int, _RepArrays] = {r: done[r] for r in done if r < reps}
    finished = len(results)
    lock = threading.Lock()

    def land(r: int, arrs: _RepArrays):
        nonlocal finished
        if checkpoint_dir is not None:
            _checkpoint_save(checkpoint_dir, r, arrs)
        with lock:
            results[r] = arrs
            finished += 1
        if progress is not None:
            progress(finished, reps)

    if workers > 1 and todo:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            futures = {pool.submit(compute, r): r for r in todo}
            for fut in as_completed(futures):
                land(futures[fut], fut.result())
    else:
        for r in todo:
            land(r, compute(r))

    return _aggregate(
        results, reps, label, spec, probes, h_specs, functions, truth, grid, master_seed
    )


def _aggregate(
    results, reps, label, spec, probes, h_specs, functions, truth, grid, master_seed
) -> McSummary:
    n_h, n_v, n_f = len(h_specs), len(probes), len(functions)
    probe_est = np.full((reps, n_h, n_v, n_f), np.nan)
    probe_se = np.full((reps, n_h, n_v, n_f), np.nan)
    ase = np.full((reps, n_h, n_f), np.nan)
    for r in range(reps):
        arrs = results[r]
        probe_est[r] = arrs.probe_est
        probe_se[r] = arrs.probe_se
        ase[r] = arrs.ase

    truth_probe = _truth_columns(truth, functions, probes) if probes else None
    probe_stats = []
    for hi, hs in enumerate(h_specs):
        for vi in range(n_v):
            for fi, fn in enumerate(functions):
                col = probe_est[:, hi, vi, fi]
                ok = np.isfinite(col)
                cnt = int(ok.sum())
                t0 = truth_probe[vi, fi]
                bias = float(np.mean(col[ok]) - t0) if cnt else float("nan")
                sd = float(np.std(col[ok], ddof=1)) if cnt >= 2 else float("nan")
                mse = float(np.mean((col[ok] - t0) ** 2)) if cnt else float("nan")
                ses = probe_se[:, hi, vi, fi]
                have = np.isfinite(ses)
                se = float(np.mean(ses[have])) if have.any() else float("nan")
                probe_stats.append(
                    ProbeStat(
                        v=probes[vi],
                        h=hs.label,
                        function=fn,
                        bias=bias,
                        sd=sd,
                        se=se,
                        mse=mse,
                        count=cnt,
                        skips=reps - cnt,
                    )
                )

    ase_stats = []
    for hi, hs in enumerate(h_specs):
        for fi, fn in enumerate(functions):
            col = ase[:, hi, fi]
            ok = np.isfinite(col)
            cnt = int(ok.sum())
            ase_stats.append(
                AseStat(
                    h=hs.label,
                    h_run=hs.run,
                    function=fn,
                    mean=float(np.mean(col[ok])) if cnt else float("nan"),
                    median=float(np.median(col[ok])) if cnt else float("nan"),
                    std=float(np.std(col[ok], ddof=1)) if cnt >= 2 else float("nan"),
                    count=cnt,
                    skips=reps - cnt,
                    per_rep=col.copy(),
                )
            )

    grid_stats = []
    if spec.keep_curves:
        m = grid.shape[0]
        curve_est = np.full((reps, n_h, m, n_f), np.nan)
        curve_se = np.full((reps, n_h, m, n_f), np.nan)
        for r in range(reps):
            curve_est[r] = results[r].curve_est
            curve_se[r] = results[r].curve_se
        truth_grid = _truth_columns(truth, functions, grid)
        for hi, hs in enumerate(h_specs):
            for fi, fn in enumerate(functions):
                est = curve_est[:, hi, :, fi]
                usable = np.isfinite(est).sum(axis=0) >= 2
                if not usable.any():
                    grid_stats.append(
                        GridStat(hs.label, fn, float("nan"), float("nan"), float("nan"), 0)
                    )
                    continue
                est_u = est[:, usable]
                bias_u = np.nanmean(est_u, axis=0) - truth_grid[usable, fi]
                sd_u = np.nanstd(est_u, axis=0, ddof=1)
                se_u = _columnwise_mean(curve_se[:, hi, usable, fi])
                have_se = np.isfinite(se_u)
                grid_stats.append(
                    GridStat(
                        h=hs.label,
                        function=fn,
                        abias=float(np.mean(np.abs(bias_u))),
                        sd=float(np.mean(sd_u)),
                        se=float(np.mean(se_u[have_se]))
                        if have_se.any()
                        else float("nan"),
                        n_grid=int(usable.sum()),
                    )
                )

    return McSummary(
        scenario=label,
        estimator=spec.name,
        reps=reps,
        master_seed=int(master_seed),
        probes=probes,
        h_values=h_specs,
        functions=functions,
        probe_stats=probe_stats,
        ase_stats=ase_stats,
        grid_stats=grid_stats,
    )


# ---------------------------------------------------------------------------
# preset plans


@dataclass(frozen=True)
class BenchPlan:
    """A fully configured benchmark: scenario, truth, estimators, layout."""

    name: str
    scenario: SimScenario
    truth: TruthSet
    estimators: tuple
    probes: tuple
    h_values: tuple
    se_h: tuple
    style: str
    reps: int
    master_seed: int


def table1_plan(
    reps: int = 200,
    master_seed: int = 20260819,
    theta: float = 0.25,
    censor_c: float = 2.0,
    n: int = 200,
) -> BenchPlan:
    """Probe-point bias/SE/SD benchmark on the first simulation preset.

    Five probe points by five bandwidths for the pseudo-partial
    estimator; standard errors are computed at every bandwidth.
    """
    return BenchPlan(
        name=f"table1_theta{theta:g}_c{censor_c:g}",
        scenario=set1_scenario(n=n, theta=theta, censor_c=censor_c),
        truth=set1_truth(),
        estimators=(EstimatorSpec("pseudo_partial", grid_size=40),),
        probes=(0.5, 1.0, 1.5, 2.0, 2.5),
        h_values=tuple(
            BandwidthSpec(h, h) for h in (0.075, 0.1, 0.15, 0.2, 0.4)
        ),
        se_h=(0.075, 0.1, 0.15, 0.2, 0.4),
        style="probes",
        reps=reps,
        master_seed=master_seed,
    )


def table2_plan(
    reps: int = 200,
    master_seed: int = 20260819,
    theta: float = 0.25,
    censor_c: float = 5.0,
    n: int = 200,
) -> BenchPlan:
    """Pooled pseudo-partial versus optimally weighted per-type fits.

    Pooled curves run at h = 0.15; the weighted combination fits each
    failure type at 1.5 x that (0.225) since per-type data is thinner.
    Grid-averaged absolute bias, SD and SE columns come from the stored
    per-replication curves.
    """
    return BenchPlan(
        name=f"table2_theta{theta:g}_c{censor_c:g}",
        scenario=set1_scenario(n=n, theta=theta, censor_c=censor_c),
        truth=set1_truth(),
        estimators=(
            EstimatorSpec("pseudo_partial", grid_size=60, keep_curves=True),
            EstimatorSpec(
                "weighted",
                grid_size=60,
                keep_curves=True,
                type_bandwidth_factor=1.5,
            ),
        ),
        probes=(),
        h_values=(BandwidthSpec(0.15, 0.15),),
        se_h=(),
        style="weighted",
        reps=reps,
        master_seed=master_seed,
    )


def table3_plan(
    reps: int = 200,
    master_seed: int = 20260819,
    theta: float = 0.25,
    censor_c: float = 2.0,
    n: int = 200,
) -> BenchPlan:
    """Curve ASE of the pseudo-partial versus one-step estimators.

    Runs the second simulation preset.  The bandwidth labels 0.1, 0.2
    and 0.4 follow the full-width convention, so fits execute at
    Gaussian kernel SD = label / 2 (see BandwidthSpec); the grid has
    100 points across the unit index range, a desk-scale count.
    """
    return BenchPlan(
        name=f"table3_theta{theta:g}_c{censor_c:g}",
        scenario=set2_scenario(n=n, theta=theta, censor_c=censor_c),
        truth=set2_truth(),
        estimators=(
            EstimatorSpec("pseudo_partial", grid_size=100),
            EstimatorSpec("one_step", grid_size=100),
        ),
        probes=(),
        h_values=(
            BandwidthSpec(0.1, 0.05),
            BandwidthSpec(0.2, 0.10),
            BandwidthSpec(0.4, 0.20),
        ),
        se_h=(),
        style="ase",
        reps=reps,
        master_seed=master_seed,
    )


def run_plan(
    plan: BenchPlan,
    workers: int = 1,
    checkpoint_dir: str | None = None,
    progress: Callable | None = None,
) -> list:
    """Run every estimator of a plan; one McSummary each."""
    out = []
    for spec in plan.estimators:
        sub = (
            os.path.join(checkpoint_dir, f"{plan.name}_{spec.name}")
            if checkpoint_dir
            else None
        )
        out.append(
            run_mc(
                plan.scenario,
                spec,
                plan.reps,
                probes=plan.probes,
                h_values=plan.h_values,
                master_seed=plan.master_seed,
                truth=plan.truth,
                se_h=plan.se_h,
                workers=workers,
                checkpoint_dir=sub,
                progress=progress,
                scenario_label=plan.name,
            )
        )
    return out


# ---------------------------------------------------------------------------
# reports


def _fmt_csv(x: float) -> str:
    return "NA" if not np.isfinite(x) else repr(float(x))


def _fmt_txt(x: float, width: int = 10) -> str:
    return ("NA" if not np.isfinite(x) else f"{x:.4f}").rjust(width)


def _probe_tables(summary: McSummary, fmt: str) -> dict:
    out = {}
    for fn in summary.functions:
        rows = [
            summary.probe(v, hs.label, fn)
            for v in summary.probes
            for hs in summary.h_values
        ]
        if fmt == "csv":
            lines = ["v,h,bias,se,sd"]
            lines += [
                f"{st.v:g},{st.h:g},{_fmt_csv(st.bias)},{_fmt_csv(st.se)},{_fmt_csv(st.sd)}"
                for st in rows
            ]
        else:
            lines = [f"function {fn}  ({summary.scenario}, {summary.estimator})"]
            lines.append(f"{'v':>6} {'h':>7} {'bias':>10} {'se':>10} {'sd':>10}")
            lines += [
                f"{st.v:6.2f} {st.h:7.3f}"
                f" {_fmt_txt(st.bias)} {_fmt_txt(st.se)} {_fmt_txt(st.sd)}"
                for st in rows
            ]
        out[f"probes_{fn}"] = "\n".join(lines) + "\n"
    return out


def _ase_tables(summaries, fmt: str) -> dict:
    first = summaries[0]
    for s in summaries[1:]:
        if s.functions != first.functions or [h.label for h in s.h_values] != [
            h.label for h in first.h_values
        ]:
            raise DataError("ASE report needs summaries with matching layout")
    out = {}
    for fn in first.functions:
        if fmt == "csv":
            lines = ["h,estimator,mean,median,std"]
            for hs in first.h_values:
                for s in summaries:
                    st = s.ase(hs.label, fn)
                    lines.append(
                        f"{st.h:g},{s.estimator},{_fmt_csv(st.mean)},"
                        f"{_fmt_csv(st.median)},{_fmt_csv(st.std)}"
                    )
        else:
            lines = [f"curve ASE for {fn}  ({first.scenario})"]
            lines.append(
                f"{'h':>7} {'estimator':>14} {'mean':>10} {'median':>10} {'std':>10}"
            )
            for hs in first.h_values:
                for s in summaries:
                    st = s.ase(hs.label, fn)
                    lines.append(
                        f"{st.h:7.3f} {s.estimator:>14}"
                        f" {_fmt_txt(st.mean)} {_fmt_txt(st.median)} {_fmt_txt(st.std)}"
                    )
        out[f"ase_{fn}"] = "\n".join(lines) + "\n"
    return out


def _weighted_tables(summaries, fmt: str) -> dict:
    out = {}
    functions = summaries[0].functions
    shared = [fn for fn in functions if all(fn in s.functions for s in summaries)]
    for fn in shared:
        rows = []
        for s in summaries:
            hs = s.h_values[0]
            gs = s.grid(hs.label, fn)
            ast = s.ase(hs.label, fn)
            rows.append((s.estimator, gs.abias, gs.sd, gs.se, ast.mean_rase))
        if fmt == "csv":
            lines = ["estimator,abias,sd,se,rase"]
            lines += [
                f"{est},{_fmt_csv(a)},{_fmt_csv(sd)},{_fmt_csv(se)},{_fmt_csv(rs)}"
                for est, a, sd, se, rs in rows
            ]
        else:
            lines = [f"grid-averaged comparison for {fn}  ({summaries[0].scenario})"]
            lines.append(
                f"{'estimator':>14} {'abias':>10} {'sd':>10} {'se':>10} {'rase':>10}"
            )
            lines += [
                f"{est:>14} {_fmt_txt(a)} {_fmt_txt(sd)} {_fmt_txt(se)} {_fmt_txt(rs)}"
                for est, a, sd, se, rs in rows
            ]
        out[f"weighted_{fn}"] = "\n".join(lines) + "\n"
    return out


def report(summaries, fmt: str = "csv", style: str | None = None) -> dict:
    """Render Monte Carlo summaries as named tables.

    Returns {table name: contents}.  fmt is "csv" (machine-facing,
    round-trip exact) or "text" (aligned, human-facing); both renderings
    are byte-stable for equal inputs.  Styles: "probes" (rows v x h with
    bias/SE/SD per target function), "ase" (rows h x estimator with
    mean/median/std of curve ASE), "weighted" (grid-averaged comparison
    columns per estimator).  The default style is inferred from the
    first summary's contents.
    """
    if fmt not in ("csv", "text"):
        raise DataError(f"unknown report format: {fmt!r}")
    if isinstance(summaries, McSummary):
        summaries = [summaries]
    summaries = list(summaries)
    if not summaries:
        raise DataError("no summaries to report")
    if style is None:
        if summaries[0].probe_stats:
            style = "probes"
        elif summaries[0].grid_stats:
            style = "weighted"
        else:
            style = "ase"
    if style == "probes":
        if len(summaries) != 1:
            raise DataError("probe-style report takes exactly one summary")
        return _probe_tables(summaries[0], fmt)
    if style == "ase":
        return _ase_tables(summaries, fmt)
    if style == "weighted":
        return _weighted_tables(summaries, fmt)
    raise DataError(f"unknown report style: {style!r}")


def report_plan(plan: BenchPlan, summaries, fmt: str = "csv") -> dict:
    return report(summaries, fmt, style=plan.style)
