"""Maximizers for the local pseudo-partial likelihood and curve fitting.

``maximize_local`` runs a damped Newton iteration at one evaluation
point. ``one_step`` performs the single Newton update

    xi_1 = xi_0 - l''(xi_0)^-1 l'(xi_0)

from a good initial value, which retains the asymptotics of the full
maximizer when the initializer is consistent enough; ``fit_curve``
exploits this by fully maximizing at a few anchor grid points and
propagating one-step updates outward, each point initialized at its
already-fitted neighbor.

All Newton algebra happens in rescaled coordinates phi = H xi (see
loclik); results are reported as LocalParams on the natural scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as sla

from .errors import NoLocalData, NonConvergence, SingularHessian
from .kernels import GAUSSIAN, Kernel
from .loclik import LocalDesign, LocalEvaluator, LocalParams

__all__ = [
    "FitOptions",
    "LocalFit",
    "CurveEstimate",
    "maximize_local",
    "one_step",
    "fit_curve",
    "integrate_gprime",
    "default_grid",
    "default_anchors",
]


@dataclass(frozen=True)
class FitOptions:
    """Solver controls.

    mode: "full_newton" fits every grid point independently from zero;
    "one_step" fully fits anchor points and propagates single Newton
    updates outward; "k_step" propagates k updates (k = k_steps).
    min_effective_events is the NoLocalData floor on the kernel-weighted
    event count sum_events K((V - v)/h).
    bridge_gaps: when integrating g' into g across NoLocalData gaps,
    interpolate the missing slope instead of letting missingness
    propagate outward.
    """

    max_iterations: int = 50
    gradient_tolerance: float = 1e-8
    step_halving_max: int = 20
    min_effective_events: float = 5.0
    mode: str = "full_newton"
    k_steps: int = 1
    bridge_gaps: bool = False

    def __post_init__(self):
        if self.mode not in ("full_newton", "one_step", "k_step"):
            raise ValueError(f"unknown fit mode {self.mode!r}")
        if self.k_steps < 1:
            raise ValueError("k_steps must be >= 1")


@dataclass
class LocalFit:
    """Result of a local fit at one evaluation point.

    ``params`` is xi-hat = (beta(v), beta'(v), g'(v)); ``hessian`` is the
    rescaled Hessian evaluated at the solution; ``converged`` is set only
    when the rescaled score norm at the reported parameter meets the
    gradient tolerance (one-step fits re-evaluate the score to report
    this honestly).
    """

    v: float
    h: float
    params: LocalParams
    phi: np.ndarray
    hessian: np.ndarray
    score_norm: float
    converged: bool
    iterations: int
    effective_events: float
    mode: str = "newton"

    @property
    def beta(self) -> np.ndarray:
        return self.params.delta

    @property
    def gprime(self) -> float:
        return self.params.gamma


def _init_phi(ev: LocalEvaluator, init) -> np.ndarray:
    if init is None:
        return np.zeros(ev.d)
    return ev.phi_of(init)


def _newton_direction(neg_hess: np.ndarray, score: np.ndarray) -> np.ndarray:
    """Solve (-H) d = score for the ascent direction, ridging if needed."""
    try:
        c = sla.cho_factor(neg_hess, check_finite=False)
        return sla.cho_solve(c, score, check_finite=False)
    except (sla.LinAlgError, ValueError):
        pass
    scale = max(float(np.trace(neg_hess)) / neg_hess.shape[0], 1.0)
    for ridge in (1e-12, 1e-9, 1e-6):
        try:
            c = sla.cho_factor(
                neg_hess + ridge * scale * np.eye(neg_hess.shape[0]),
                check_finite=False,
            )
            return sla.cho_solve(c, score, check_finite=False)
        except (sla.LinAlgError, ValueError):
            continue
    raise SingularHessian("local Hessian is numerically singular")


def _check_nonsingular(neg_hess: np.ndarray, where: str):
    eigs = np.linalg.eigvalsh(neg_hess)
    largest = float(np.abs(eigs).max())
    smallest = float(np.abs(eigs).min())
    if largest == 0.0 or smallest < 1e-10 * largest:
        raise SingularHessian(
            f"{where}: smallest |eigenvalue| {smallest:.3e} < 1e-10 x largest "
            f"{largest:.3e}"
        )


def maximize_local(
    ds,
    design: LocalDesign,
    init=None,
    opts: FitOptions | None = None,
    members=None,
) -> LocalFit:
    """Newton maximization of the local pseudo-partial likelihood at design.v.

    Step-halving guards each update so the log-likelihood never decreases;
    concavity makes the maximizer independent of ``init`` (up to tolerance).
    Raises NoLocalData below the effective-event floor and NonConvergence
    (carrying the best iterate) after max_iterations.
    """
    opts = opts or FitOptions()
    ev = LocalEvaluator(ds, design, members)
    if ev.effective_events < opts.min_effective_events:
        raise NoLocalData(design.v, ev.effective_events, opts.min_effective_events)
    phi = _init_phi(ev, init)
    ll, score, hess = ev.evaluate(phi)
    iterations = 0
    stalled = False
    while True:
        score_norm = float(np.linalg.norm(score))
        if score_norm <= opts.gradient_tolerance or iterations >= opts.max_iterations:
            break
        if stalled:
            break
        direction = _newton_direction(-hess, score)
        step = 1.0
        accepted = False
        for _ in range(opts.step_halving_max + 1):
            cand = phi + step * direction
            ll_cand = ev.evaluate(cand, need_score=False, need_hessian=False)[0]
            if ll_cand >= ll:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no step length improves the objective: at floating-point
            # resolution of the optimum, or a genuinely bad direction
            stalled = True
            continue
        phi = cand
        iterations += 1
        ll, score, hess = ev.evaluate(phi)
    converged = float(np.linalg.norm(score)) <= opts.gradient_tolerance
    fit = LocalFit(
        v=design.v,
        h=design.h,
        params=ev.xi_of(phi),
        phi=phi,
        hessian=hess,
        score_norm=float(np.linalg.norm(score)),
        converged=converged,
        iterations=iterations,
        effective_events=ev.effective_events,
        mode="newton",
    )
    if not converged:
        raise NonConvergence(
            fit,
            f"no convergence at v={design.v:.6g} after {iterations} iterations "
            f"(score norm {fit.score_norm:.3e})",
        )
    return fit


def _k_newton_steps(
    ds, design: LocalDesign, init, opts: FitOptions, k: int, members=None
) -> LocalFit:
    ev = LocalEvaluator(ds, design, members)
    if ev.effective_events < opts.min_effective_events:
        raise NoLocalData(design.v, ev.effective_events, opts.min_effective_events)
    phi = _init_phi(ev, init)
    for _ in range(k):
        _, score, hess = ev.evaluate(phi, need_loglik=False)
        _check_nonsingular(-hess, f"one-step update at v={design.v:.6g}")
        phi = phi + np.linalg.solve(-hess, score)
    # re-evaluate at the result so score_norm/convergence/Hessian are honest
    _, score, hess = ev.evaluate(phi, need_loglik=False)
    score_norm = float(np.linalg.norm(score))
    return LocalFit(
        v=design.v,
        h=design.h,
        params=ev.xi_of(phi),
        phi=phi,
        hessian=hess,
        score_norm=score_norm,
        converged=score_norm <= opts.gradient_tolerance,
        iterations=k,
        effective_events=ev.effective_events,
        mode="one_step" if k == 1 else f"k_step({k})",
    )


def one_step(
    ds, design: LocalDesign, init, opts: FitOptions | None = None, members=None
) -> LocalFit:
    """Exactly one Newton update from ``init``.

    Raises SingularHessian when the smallest |eigenvalue| of the local
    Hessian falls below 1e-10 times the largest; callers fall back to a
    full Newton fit (fit_curve does this automatically).
    """
    return _k_newton_steps(ds, design, init, opts or FitOptions(), 1, members)


def default_grid(ds, h: float, size: int = 200, members=None) -> np.ndarray:
    """Equally spaced evaluation grid spanning [min V + h, max V - h]."""
    if members is None:
        lo, hi = ds.v_range
    else:
        vals = np.concatenate([ds.member(j).v for j in members])
        lo, hi = float(vals.min()), float(vals.max())
    if lo + h >= hi - h:
        raise ValueError(
            f"bandwidth {h} too large for observed V range [{lo:.6g}, {hi:.6g}]"
        )
    return np.linspace(lo + h, hi - h, size)


def default_anchors(size: int) -> list[int]:
    """Anchor indices at the 10/30/50/70/90% positions of the grid."""
    anchors = sorted({min(int(f * size), size - 1) for f in (0.1, 0.3, 0.5, 0.7, 0.9)})
    return anchors


@dataclass
class CurveEstimate:
    """Coefficient curves over an evaluation grid.

    beta (m, p), eta (m, p) and gprime (m,) are NaN at NoLocalData gaps.
    g is the cumulative trapezoid integral of gprime, zero at the leftmost
    successfully fitted grid point (g is identified only up to a constant;
    the baseline hazards absorb the normalization).
    """

    grid: np.ndarray
    h: float
    kernel: Kernel
    beta: np.ndarray
    eta: np.ndarray
    gprime: np.ndarray
    g: np.ndarray
    fits: list
    anchors: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    g_anchor_index: int | None = None
    se_beta: np.ndarray | None = None
    se_gprime: np.ndarray | None = None

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    @property
    def n_fitted(self) -> int:
        return int(np.sum(~np.isnan(self.gprime)))

    @property
    def fitted_range(self) -> tuple[float, float]:
        """Smallest and largest grid points with a successful fit."""
        xp = self.grid[~np.isnan(self.gprime)]
        if xp.size == 0:
            raise ValueError("curve has no fitted points")
        return float(xp[0]), float(xp[-1])

    def covers(self, v) -> np.ndarray:
        """True where interpolation at v rests on fitted grid points only.

        A value is covered when it lies inside the fitted range and its
        enclosing grid cell has both endpoints fitted (or it sits exactly
        on a fitted grid point). Values in unfitted interior gaps and
        beyond the fitted range are not covered.
        """
        v = np.atleast_1d(np.asarray(v, dtype=float))
        mask = ~np.isnan(self.gprime)
        if not mask.any():
            return np.zeros(v.shape, dtype=bool)
        xp = self.grid[mask]
        inside = (v >= xp[0]) & (v <= xp[-1])
        m = self.grid.shape[0]
        cell = np.clip(np.searchsorted(self.grid, v, side="right") - 1, 0, m - 2)
        both = mask[cell] & mask[cell + 1]
        pos = np.searchsorted(self.grid, v)
        exact = np.zeros(v.shape, dtype=bool)
        ok = pos < m
        exact[ok] = (self.grid[pos[ok]] == v[ok]) & mask[pos[ok]]
        return inside & (both | exact)

    def _interp(self, v, xp_mask, ycols, clamp, what):
        xp = self.grid[xp_mask]
        if xp.size == 0:
            raise ValueError(f"curve has no fitted points for {what}")
        v = np.asarray(v, dtype=float)
        if not clamp:
            bad = (v < xp[0]) | (v > xp[-1])
            if np.any(bad):
                worst = np.atleast_1d(v)[np.atleast_1d(bad)][0]
                raise ValueError(
                    f"v={worst:.6g} outside fitted grid range "
                    f"[{xp[0]:.6g}, {xp[-1]:.6g}] for {what}"
                )
        ycols = np.atleast_2d(ycols)
        out = np.stack([np.interp(v, xp, col[xp_mask]) for col in ycols], axis=-1)
        return out

    def beta_at(self, v, clamp: bool = False) -> np.ndarray:
        """Interpolated beta(v); shape (..., p)."""
        mask = ~np.isnan(self.beta[:, 0])
        return self._interp(v, mask, self.beta.T, clamp, "beta")

    def gprime_at(self, v, clamp: bool = False):
        mask = ~np.isnan(self.gprime)
        return self._interp(v, mask, self.gprime, clamp, "gprime")[..., 0]

    def g_at(self, v, clamp: bool = False):
        mask = ~np.isnan(self.g)
        return self._interp(v, mask, self.g, clamp, "g")[..., 0]

    def risk_scores(self, v, z, clamp: bool = False) -> np.ndarray:
        """exp{beta(v)'z + g(v)} for arrays of records (v: (m,), z: (m, p))."""
        v = np.asarray(v, dtype=float)
        z = np.asarray(z, dtype=float)
        b = self.beta_at(v, clamp=clamp)
        g = self.g_at(v, clamp=clamp)
        return np.exp(np.sum(b * z, axis=-1) + g)


def integrate_gprime(
    grid, gprime, anchor_index: int | None = None, bridge_gaps: bool = False
) -> np.ndarray:
    """Cumulative trapezoid integral of g' over the grid, zero at the anchor.

    Missing g' values (NaN) make the integral missing beyond the gap, on
    the far side from the anchor, unless ``bridge_gaps`` interpolates the
    slope linearly across interior gaps first.
    """
    grid = np.asarray(grid, dtype=float)
    gp = np.array(gprime, dtype=float, copy=True)
    if grid.shape != gp.shape or grid.ndim != 1:
        raise ValueError("grid and gprime must be 1-d arrays of equal length")
    fitted = ~np.isnan(gp)
    if not fitted.any():
        return np.full_like(gp, np.nan)
    if bridge_gaps:
        first, last = np.flatnonzero(fitted)[[0, -1]]
        interior = np.arange(first, last + 1)
        gp[interior] = np.interp(grid[interior], grid[fitted], gp[fitted])
        fitted = ~np.isnan(gp)
    if anchor_index is None:
        anchor_index = int(np.flatnonzero(fitted)[0])
    if not 0 <= anchor_index < grid.shape[0]:
        raise ValueError(f"anchor_index {anchor_index} out of range")
    if np.isnan(gp[anchor_index]):
        raise ValueError(f"gprime is missing at anchor index {anchor_index}")
    inc = np.diff(grid) * 0.5 * (gp[1:] + gp[:-1])
    g = np.empty_like(gp)
    g[anchor_index] = 0.0
    if anchor_index + 1 <= grid.shape[0] - 1:
        g[anchor_index + 1 :] = np.cumsum(inc[anchor_index:])
    if anchor_index > 0:
        g[:anchor_index] = -np.cumsum(inc[:anchor_index][::-1])[::-1]
    return g


def _segment_owner(size: int, anchors: list[int], ok: list[bool]) -> np.ndarray:
    """Assign every grid index to its nearest successfully fitted anchor."""
    good = [a for a, s in zip(anchors, ok) if s]
    owner = np.full(size, -1, dtype=int)
    if not good:
        return owner
    idx = np.arange(size)
    garr = np.asarray(good)
    dists = np.abs(idx[:, None] - garr[None, :])
    # midpoint between adjacent anchors belongs to the right-hand segment
    pick = garr.shape[0] - 1 - np.argmin(dists[:, ::-1], axis=1)
    return garr[pick]


def fit_curve(
    ds,
    grid,
    h: float,
    kernel: Kernel = GAUSSIAN,
    opts: FitOptions | None = None,
    anchors: list[int] | None = None,
    tau: float | None = None,
    members=None,
) -> CurveEstimate:
    """Fit the coefficient curves over a grid of evaluation points.

    full_newton mode maximizes independently at every point (init 0).
    one_step / k_step modes fully maximize at the anchor points, split the
    grid into segments at midpoints between adjacent anchors, and within
    each segment propagate Newton updates outward from the anchor, each
    point initialized at its already-fitted neighbor. NoLocalData points
    become gaps (NaN rows; propagation continues from the last success);
    a singular Hessian in a one-step update falls back to full Newton at
    that point.
    """
    opts = opts or FitOptions()
    grid = np.asarray(grid, dtype=float)
    m = grid.shape[0]
    p = ds.p
    fits: list = [None] * m
    gaps: list[int] = []
    used_anchors: list[int] = []

    def attempt_full(i, init=None):
        design = LocalDesign(v=float(grid[i]), h=h, kernel=kernel, tau=tau)
        try:
            fits[i] = maximize_local(ds, design, init=init, opts=opts, members=members)
        except NoLocalData:
            gaps.append(i)
        except NonConvergence as e:
            fits[i] = e.fit

    def attempt_step(i, init):
        design = LocalDesign(v=float(grid[i]), h=h, kernel=kernel, tau=tau)
        try:
            fits[i] = _k_newton_steps(
                ds, design, init, opts, opts.k_steps, members=members
            )
        except NoLocalData:
            gaps.append(i)
        except SingularHessian:
            attempt_full(i, init=init)

    if opts.mode == "full_newton":
        for i in range(m):
            attempt_full(i)
    else:
        used_anchors = list(anchors) if anchors is not None else default_anchors(m)
        for a in used_anchors:
            if not 0 <= a < m:
                raise ValueError(f"anchor index {a} outside grid of size {m}")
            attempt_full(a)
        ok = [fits[a] is not None for a in used_anchors]
        owner = _segment_owner(m, used_anchors, ok)
        for a, good in zip(used_anchors, ok):
            if not good:
                continue
            owned = np.flatnonzero(owner == a)
            lo, hi = int(owned[0]), int(owned[-1])
            init = fits[a].params
            for i in range(a - 1, lo - 1, -1):
                attempt_step(i, init)
                if fits[i] is not None:
                    init = fits[i].params
            init = fits[a].params
            for i in range(a + 1, hi + 1):
                attempt_step(i, init)
                if fits[i] is not None:
                    init = fits[i].params

    beta = np.full((m, p), np.nan)
    eta = np.full((m, p), np.nan)
    gprime = np.full(m, np.nan)
    for i, f in enumerate(fits):
        if f is not None:
            beta[i] = f.params.delta
            eta[i] = f.params.eta
            gprime[i] = f.params.gamma
    fitted = np.flatnonzero(~np.isnan(gprime))
    if fitted.size:
        g_anchor = int(fitted[0])
        g = integrate_gprime(grid, gprime, g_anchor, bridge_gaps=opts.bridge_gaps)
    else:
        g_anchor = None
        g = np.full(m, np.nan)
    return CurveEstimate(
        grid=grid,
        h=h,
        kernel=kernel,
        beta=beta,
        eta=eta,
        gprime=gprime,
        g=g,
        fits=fits,
        anchors=used_anchors,
        gaps=sorted(gaps),
        g_anchor_index=g_anchor,
    )
