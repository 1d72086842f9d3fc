"""Weighted-average estimation across failure types.

Under the shared-coefficient model every failure type identifies the same
xi(v) = (beta(v), beta'(v), g'(v)), so fitting each type separately and
averaging, sum_k c_k xi_hat_k(v) with sum c_k = 1, is consistent for any
weights and can beat the pooled fit when the weights account for the joint
sampling covariance of the per-type estimates.

That covariance is estimated from per-cluster score contributions

    W_jk(xi_k) = Delta_jk K_h(V_jk - v) [U*_jk - Ehat_k(X_jk, v)]
               - sum_m ratio_jk(X_mk) K_h(V_jk - v) [U*_jk - Ehat_k(X_mk, v)],

the martingale-score representation for cluster j and type k: an event term
minus a compensator sum over the type-k events, where ratio_jk(t) is cluster
j's share of the at-risk exponential relative hazard at t. All risk scores
inside W are the local linear ones exp(xi_k' X*) implied by xi_k itself (the
additive g(v) constant cancels in the ratio), which makes sum_j W_jk vanish
identically at the per-type maximizer, and Ehat_k is the kernel-weighted
risk-set mean of U*. Cross blocks D_kl = (h/n) sum_j W_jk W_jl' feed the
per-component sandwich exactly as the single-type variance does: the
(nh)^{-1} A_k^{-1} D_kl A_l^{-1} blocks of Sigma_star reduce to the familiar
A^{-1} (n^{-2} sum W W') A^{-1} clustered form, so the kernel bandwidth
cancels from the final covariance.

The optimal weights for one beta component minimize c' Sigma_w c subject to
sum c = 1, giving c = Sigma_w^{-1} e / (e' Sigma_w^{-1} e); components may be
negative. Near-singular Sigma_w gets one ridge pass, then an equal-weight
fallback with a warning: per-type data can be too sparse for a stable joint
covariance, and a defensible average beats no estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    NoLocalData,
    NonConvergence,
    NumericalError,
    SingularSigma,
)
from .fitting import CurveEstimate, FitOptions, LocalFit, fit_curve, maximize_local
from .inference import _check_invertible
from .kernels import GAUSSIAN, Kernel, kernel_scaled
from .loclik import LocalDesign, LocalEvaluator, _u_columns

__all__ = [
    "TypeStack",
    "WeightedCurve",
    "WeightedEstimate",
    "combine",
    "cross_cov",
    "fit_per_type",
    "fit_weighted_curve",
    "optimal_weights",
    "sigma_star",
    "w_matrix",
    "w_vector",
]

CONDITION_LIMIT = 1e10
RIDGE_FRACTION = 1e-8


@dataclass
class TypeStack:
    """Per-type local fits at a common evaluation point and bandwidth.

    ``fits`` maps failure-type labels to their LocalFit; ``failures``
    records, per label, why a type could not be fitted (or a convergence
    note when a best-effort iterate was kept). Cross-covariance blocks and
    the stacked covariance are computed lazily and cached.
    """

    ds: object = field(repr=False)
    v: float = 0.0
    h: float = 0.0
    kernel: Kernel = GAUSSIAN
    tau: float | None = None
    fits: dict[int, LocalFit] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)
    _w: dict = field(default_factory=dict, repr=False)
    _ainv: dict = field(default_factory=dict, repr=False)
    _cross: dict = field(default_factory=dict, repr=False)
    _sigma: np.ndarray | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return self.ds.p

    @property
    def d(self) -> int:
        return 2 * self.ds.p + 1

    @property
    def fitted(self) -> tuple:
        return tuple(sorted(self.fits))

    def a_hat(self, k: int) -> np.ndarray:
        if k not in self.fits:
            raise DataError(f"failure type {k} has no local fit at v={self.v:.6g}")
        return -self.fits[k].hessian

    def _a_inverse(self, k: int) -> np.ndarray:
        if k not in self._ainv:
            a = self.a_hat(k)
            _check_invertible(a)
            inv = np.linalg.inv(a)
            self._ainv[k] = 0.5 * (inv + inv.T)
        return self._ainv[k]


def fit_per_type(
    ds,
    v: float,
    h: float,
    kernel: Kernel = GAUSSIAN,
    tau: float | None = None,
    opts: FitOptions | None = None,
) -> TypeStack:
    """Fit each failure type separately at the same v and h.

    Types without enough local data are recorded in ``failures`` and left
    out of the stack; a non-converged fit keeps its best iterate (matching
    the curve pipeline) with a note.
    """
    stack = TypeStack(ds=ds, v=float(v), h=float(h), kernel=kernel, tau=tau)
    design = LocalDesign(v=float(v), h=float(h), kernel=kernel, tau=tau)
    for k in range(1, ds.J + 1):
        try:
            stack.fits[k] = maximize_local(ds, design, opts=opts, members=[k])
        except NoLocalData as exc:
            stack.failures[k] = str(exc)
        except NonConvergence as exc:
            stack.fits[k] = exc.fit
            stack.failures[k] = str(exc)
    return stack


def w_matrix(stack: TypeStack, k: int) -> np.ndarray:
    """Per-cluster score vectors W_jk(xi_hat_k), stacked as an (n, 2p+1) array.

    Clusters without a type-k record, or censored before every type-k
    event with no at-risk overlap, contribute zero rows.
    """
    if k in stack._w:
        return stack._w[k]
    if k not in stack.fits:
        raise DataError(f"failure type {k} has no local fit at v={stack.v:.6g}")
    ds = stack.ds
    design = LocalDesign(v=stack.v, h=stack.h, kernel=stack.kernel, tau=stack.tau)
    phi = stack.fits[k].phi
    mv = ds.member(k)
    d = 2 * ds.p + 1
    out = np.zeros((ds.n, d))
    ev = mv.events_through(stack.tau)
    if mv.n_present == 0 or not ev.any():
        stack._w[k] = out
        return out
    kw = kernel_scaled(stack.kernel, stack.h, mv.v - stack.v)
    U = _u_columns(mv.z, mv.v - stack.v, stack.h)
    s = U @ phi
    # local risk scores enter only through at-risk ratios; shift before exp
    e = np.exp(s - s.max())
    times_ev = mv.time[ev]
    csum = np.cumsum(e[mv.desc])
    prefix = np.searchsorted(-mv.time_desc, -times_ev, side="right")
    denom = csum[prefix - 1]
    evaluator = LocalEvaluator(ds, design, members=[k])
    # rows where the kernel-weighted risk set is empty come back zero, which
    # is safe: any record multiplying them has kw > 0 and is itself at risk
    ehat_ev = evaluator.member_ehat_at(k, phi, times_ev)
    contrib = np.zeros((mv.n_present, d))
    contrib[ev] = kw[ev, None] * (U[ev] - ehat_ev)
    at_risk = mv.time[:, None] >= times_ev[None, :]
    ratio = np.where(at_risk, e[:, None] / denom[None, :], 0.0)
    tot = ratio.sum(axis=1)
    contrib -= kw[:, None] * (tot[:, None] * U - ratio @ ehat_ev)
    out[mv.cluster_rows] += contrib
    stack._w[k] = out
    return out


def w_vector(stack: TypeStack, k: int, j: int) -> np.ndarray:
    """W_jk for one cluster, indexed by dataset cluster order."""
    return w_matrix(stack, k)[j]


def cross_cov(stack: TypeStack, k: int, l: int):
    """(D_kl, G_kl): raw cross-covariance and its A-sandwiched block.

    D_kl = (h/n) sum_j W_jk W_jl' and G_kl = A_k^{-1} D_kl A_l^{-1}; blocks
    are computed once per unordered pair, so G_lk is exactly G_kl'.
    """
    key = (k, l) if k <= l else (l, k)
    if key not in stack._cross:
        wk = w_matrix(stack, key[0])
        wl = wk if key[0] == key[1] else w_matrix(stack, key[1])
        dmat = (stack.h / stack.ds.n) * (wk.T @ wl)
        ainv_k = stack._a_inverse(key[0])
        ainv_l = ainv_k if key[0] == key[1] else stack._a_inverse(key[1])
        g = ainv_k @ dmat @ ainv_l
        if key[0] == key[1]:
            g = 0.5 * (g + g.T)
        stack._cross[key] = (dmat, g)
    dmat, g = stack._cross[key]
    if (k, l) == key:
        return dmat, g
    return dmat.T, g.T


def sigma_star(stack: TypeStack) -> np.ndarray:
    """Stacked covariance of the fitted per-type estimates.

    Block (a, b) is (nh)^{-1} G_{k_a k_b} over the fitted type labels in
    ascending order; symmetric by construction.
    """
    if stack._sigma is not None:
        return stack._sigma
    labels = stack.fitted
    if not labels:
        raise DataError(f"no failure type has a local fit at v={stack.v:.6g}")
    d = stack.d
    jf = len(labels)
    scale = 1.0 / (stack.ds.n * stack.h)
    out = np.zeros((jf * d, jf * d))
    for a in range(jf):
        for b in range(a, jf):
            _, g = cross_cov(stack, labels[a], labels[b])
            out[a * d : (a + 1) * d, b * d : (b + 1) * d] = scale * g
            if b > a:
                out[b * d : (b + 1) * d, a * d : (a + 1) * d] = scale * g.T
    stack._sigma = out
    return out


def _well_conditioned(m: np.ndarray) -> bool:
    try:
        eigs = np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError:
        return False
    lo, hi = float(eigs.min()), float(eigs.max())
    return lo > 0.0 and hi / lo <= CONDITION_LIMIT


def optimal_weights(sigma_w) -> np.ndarray:
    """Minimum-variance combination weights under a sum-to-one constraint.

    c = Sigma_w^{-1} e / (e' Sigma_w^{-1} e). Ill-conditioned input gets one
    ridge of 1e-8 trace/J; if that is not enough, equal weights are returned
    with a warning rather than failing the whole combination.
    """
    m = np.asarray(sigma_w, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("sigma_w must be a square matrix")
    if not np.all(np.isfinite(m)):
        raise SingularSigma("combination covariance has non-finite entries")
    j = m.shape[0]
    if j == 1:
        return np.ones(1)
    m = 0.5 * (m + m.T)
    work = m
    if not _well_conditioned(work):
        ridge = RIDGE_FRACTION * float(np.trace(m)) / j
        if not np.isfinite(ridge) or ridge <= 0.0:
            raise SingularSigma(
                "combination covariance is singular and cannot be regularized"
            )
        work = m + ridge * np.eye(j)
        if not _well_conditioned(work):
            warnings.warn(
                "combination covariance is ill-conditioned even after "
                "regularization; using equal weights",
                RuntimeWarning,
                stacklevel=2,
            )
            return np.full(j, 1.0 / j)
    c = np.linalg.solve(work, np.ones(j))
    total = float(c.sum())
    if not np.isfinite(total) or total == 0.0:
        raise SingularSigma("combination weights do not normalize")
    return c / total


@dataclass(frozen=True)
class WeightedEstimate:
    """Optimal linear combination of one beta component across types."""

    component: int
    members: tuple
    weights: np.ndarray
    value: float
    se: float


def combine(stack: TypeStack, component: int) -> WeightedEstimate:
    """Optimally weighted average of one beta component across fitted types."""
    labels = stack.fitted
    if len(labels) < 2:
        raise DataError(
            f"weighted combination at v={stack.v:.6g} needs at least 2 fitted "
            f"failure types, got {len(labels)}"
        )
    if not 0 <= component < stack.p:
        raise ValueError(
            f"component {component} out of range for p={stack.p} covariates"
        )
    full = sigma_star(stack)
    d = stack.d
    idx = np.arange(len(labels)) * d + component
    sigma_w = full[np.ix_(idx, idx)]
    c = optimal_weights(sigma_w)
    values = np.array([stack.fits[k].params.delta[component] for k in labels])
    var = float(c @ sigma_w @ c)
    return WeightedEstimate(
        component=component,
        members=labels,
        weights=c,
        value=float(c @ values),
        se=float(np.sqrt(max(var, 0.0))),
    )


@dataclass
class WeightedCurve:
    """Weighted-average coefficient estimates over an evaluation grid.

    ``beta``, ``se_beta`` and ``weights`` are NaN at skipped grid points;
    ``skipped`` records (grid index, reason). ``curves`` keeps the per-type
    coefficient curves the combination was built from, fitted at the wider
    ``type_h`` bandwidth.
    """

    grid: np.ndarray
    h: float
    type_h: float
    members: tuple
    beta: np.ndarray
    se_beta: np.ndarray
    weights: np.ndarray
    n_types: np.ndarray
    skipped: list
    curves: dict[int, CurveEstimate]

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    @property
    def n_combined(self) -> int:
        return int(np.sum(~np.isnan(self.beta[:, 0])))


def fit_weighted_curve(
    ds,
    grid,
    h: float,
    kernel: Kernel = GAUSSIAN,
    opts: FitOptions | None = None,
    tau: float | None = None,
    type_bandwidth_factor: float = 1.5,
) -> WeightedCurve:
    """Per-type curves plus the optimally weighted combination on a grid.

    Each type is fitted at type_bandwidth_factor x h (per-type data is
    thinner than the pooled data, so the default widens the window by half).
    Grid points where fewer than 2 types have a fit, or where the joint
    covariance cannot be formed, are skipped with a reason.
    """
    grid = np.asarray(grid, dtype=float)
    if type_bandwidth_factor <= 0.0:
        raise ValueError("type_bandwidth_factor must be positive")
    type_h = type_bandwidth_factor * float(h)
    labels_all = tuple(range(1, ds.J + 1))
    curves = {
        k: fit_curve(ds, grid, type_h, kernel=kernel, opts=opts, tau=tau, members=[k])
        for k in labels_all
    }
    m = grid.shape[0]
    p = ds.p
    beta = np.full((m, p), np.nan)
    se_beta = np.full((m, p), np.nan)
    weights = np.full((m, p, ds.J), np.nan)
    n_types = np.zeros(m, dtype=int)
    skipped: list = []
    for i in range(m):
        fits = {
            k: curves[k].fits[i] for k in labels_all if curves[k].fits[i] is not None
        }
        n_types[i] = len(fits)
        if len(fits) < 2:
            skipped.append(
                (i, f"{len(fits)} of {ds.J} failure types have a local fit")
            )
            continue
        stack = TypeStack(
            ds=ds,
            v=float(grid[i]),
            h=type_h,
            kernel=kernel,
            tau=tau,
            fits=fits,
            failures={k: "no local fit" for k in labels_all if k not in fits},
        )
        try:
            for q in range(p):
                est = combine(stack, q)
                beta[i, q] = est.value
                se_beta[i, q] = est.se
                for c_val, k in zip(est.weights, est.members):
                    weights[i, q, k - 1] = c_val
        except NumericalError as exc:
            beta[i] = np.nan
            se_beta[i] = np.nan
            weights[i] = np.nan
            skipped.append((i, str(exc)))
    return WeightedCurve(
        grid=grid,
        h=float(h),
        type_h=type_h,
        members=labels_all,
        beta=beta,
        se_beta=se_beta,
        weights=weights,
        n_types=n_types,
        skipped=skipped,
        curves=curves,
    )
