"""Plug-in variance estimation and confidence intervals for local fits.

At an evaluation point v, write A_hat(v) for the negative rescaled
Hessian of the local log-likelihood and, for cluster i,

    W_i(v) = sum_j int_0^tau K_h(V_ij - v) [U*_ij - Ehat_j(w, v)] dMhat_ij(w),

the kernel-weighted martingale residual score summed over the cluster's
members. The covariance of the local estimate on the phi = H xi scale is
the sandwich

    Sigma_hat(v) = (nh)^-1 A_hat^-1 Pi_hat A_hat^-1,
    Pi_hat(v)    = (h/n) sum_i W_i(v) W_i(v)',

so that Sigma_hat = A_hat^-1 [n^-2 sum_i W_i W_i'] A_hat^-1, the
standard clustered sandwich for an objective scaled by 1/n. Diagonal
square roots of Sigma_hat are the reported standard errors; the first p
components are beta_hat(v) directly, while slope components estimate
h beta' and h g', so natural-scale slope SEs divide by h once more.

Residual increments dMhat use Breslow step increments for the baseline,
which makes the residuals at each event time sum to zero across
clusters exactly.

The bias term B_hat printed alongside these estimators equals the
rescaled score divided by h, so it vanishes at the maximizer; it is
exposed for diagnostics only and no bias correction is applied to the
intervals (undersmoothing is assumed instead).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .baseline import breslow, record_risk_scores
from .errors import DataError, SingularAHat
from .loclik import (
    LocalDesign,
    LocalEvaluator,
    _u_columns,
    local_hessian,
    local_score,
)
from .kernels import kernel_scaled

__all__ = [
    "SandwichParts",
    "ResidualIncrements",
    "a_hat",
    "b_hat",
    "residual_increments",
    "cluster_scores",
    "pi_hat",
    "sandwich",
    "local_variance",
    "curve_standard_errors",
    "confidence_band",
]


@dataclass(frozen=True)
class SandwichParts:
    """Variance-estimation pieces at one evaluation point.

    se holds standard errors for the rescaled components
    (beta(v), h beta'(v), h g'(v)); ``se_beta`` extracts the first p,
    and ``se_slopes`` rescales the rest to the natural slope scale.
    """

    v: float
    h: float
    n: int
    a_hat: np.ndarray
    pi_hat: np.ndarray
    b_hat: np.ndarray
    sigma_hat: np.ndarray
    se: np.ndarray

    @property
    def p(self) -> int:
        return (self.se.shape[0] - 1) // 2

    @property
    def se_beta(self) -> np.ndarray:
        return self.se[: self.p]

    def se_slopes(self) -> np.ndarray:
        """SEs of (beta'(v), g'(v)) on the natural scale (divided by h)."""
        return self.se[self.p :] / self.h


@dataclass(frozen=True)
class ResidualIncrements:
    """Martingale residual jumps of one member type.

    times: (M,) distinct event times; dm: (n_present, M), rows aligned
    with the member view's record order. Columns sum to zero.
    """

    member: int
    times: np.ndarray
    dm: np.ndarray


def a_hat(ds, design: LocalDesign, xi, members=None) -> np.ndarray:
    """Local information matrix: kernel-weighted sum over events of
    S2/S0 - (S1/S0)^2 in rescaled coordinates; equals -local_hessian."""
    return -local_hessian(ds, design, xi, members)


def b_hat(ds, design: LocalDesign, xi, members=None) -> np.ndarray:
    """(1/nh) sum over events of K_h [U* - Ehat]: the rescaled score over h.

    Vanishes at the maximizer by stationarity; exposed for diagnostics.
    """
    return local_score(ds, design, xi, members) / design.h


def residual_increments(
    ds, curve, baselines=None, tau=None, clamp: bool = False
) -> dict[int, ResidualIncrements]:
    """Martingale residual jump matrices dMhat_ij for every member type.

    dm[l, m] = dN_l(w_m) - Y_l(w_m) exp{beta(V_l)'Z_l + g(V_l)} dLambda_j(w_m)
    over the distinct type-j event times w_m through tau. Coefficient
    lookups are strict by default (DataError naming the first record
    whose V lies outside the curve's fitted coverage); clamp=True uses
    boundary values instead. ``baselines`` may supply precomputed
    Breslow steps per member; they must share this tau.
    """
    out = {}
    for j in range(1, ds.J + 1):
        mv = ds.member(j)
        step = (
            baselines[j]
            if baselines is not None
            else breslow(ds, j, curve, tau=tau, clamp=clamp)
        )
        r = record_risk_scores(ds, j, curve, clamp=clamp)
        times = step.times
        if times.shape[0] == 0:
            out[j] = ResidualIncrements(j, times, np.zeros((mv.n_present, 0)))
            continue
        at_risk = mv.time[:, None] >= times[None, :]
        dm = -(at_risk * r[:, None]) * step.increments[None, :]
        ev = mv.events_through(tau)
        cols = np.searchsorted(times, mv.time[ev])
        if np.any(cols >= times.shape[0]) or not np.array_equal(
            times[cols], mv.time[ev]
        ):
            raise DataError(
                f"baseline jump times for member {j} do not cover its event "
                "times; recompute the baseline with the same tau"
            )
        dm[ev, cols] += 1.0
        out[j] = ResidualIncrements(j, times, dm)
    return out


def cluster_scores(ds, design: LocalDesign, xi, residuals, members=None) -> np.ndarray:
    """Per-cluster summed residual scores W_i(v); shape (n, 2p+1).

    Row i is sum_j sum_m K_h(V_ij - v) [U*_ij - Ehat_j(w_m, v)] dm_ij[m].
    """
    ev = LocalEvaluator(ds, design, members)
    phi = ev.phi_of(xi)
    out = np.zeros((ds.n, ev.d))
    for j in ev.members:
        res = residuals[j]
        if res.times.shape[0] == 0:
            continue
        mv = ds.member(j)
        kw = kernel_scaled(design.kernel, design.h, mv.v - design.v)
        kept = np.flatnonzero(kw > 0.0)
        if kept.size == 0:
            continue
        ehat = ev.member_ehat_at(j, phi, res.times)
        U = _u_columns(mv.z[kept], mv.v[kept] - design.v, design.h)
        dmk = res.dm[kept]
        tot = dmk.sum(axis=1)
        contrib = kw[kept, None] * (tot[:, None] * U - dmk @ ehat)
        out[mv.cluster_rows[kept]] += contrib
    return out


def pi_hat(ds, design: LocalDesign, xi, residuals, members=None) -> np.ndarray:
    """(h/n) sum over clusters of W_i(v) W_i(v)': the middle of the sandwich.

    Scaled so that (nh)^-1 A^-1 Pi A^-1 is the clustered sandwich
    A^-1 [n^-2 sum W W'] A^-1.
    """
    w = cluster_scores(ds, design, xi, residuals, members)
    return (design.h / ds.n) * (w.T @ w)


def _check_invertible(a: np.ndarray):
    eigs = np.linalg.eigvalsh(a)
    largest = float(np.abs(eigs).max())
    smallest = float(np.abs(eigs).min())
    if largest == 0.0 or smallest < 1e-10 * largest:
        raise SingularAHat(
            f"information matrix is numerically singular: smallest "
            f"|eigenvalue| {smallest:.3e} vs largest {largest:.3e}"
        )


def sandwich(a_hat_matrix, pi_hat_matrix, n: int, h: float):
    """Covariance (nh)^-1 A^-1 Pi A^-1 and its diagonal-root SEs.

    Raises SingularAHat when the smallest |eigenvalue| of A falls below
    1e-10 times the largest.
    """
    a = np.asarray(a_hat_matrix, dtype=float)
    pi = np.asarray(pi_hat_matrix, dtype=float)
    _check_invertible(a)
    ainv = np.linalg.inv(a)
    sigma = ainv @ pi @ ainv / (n * h)
    sigma = 0.5 * (sigma + sigma.T)
    se = np.sqrt(np.clip(np.diag(sigma), 0.0, None))
    return sigma, se


def local_variance(ds, design: LocalDesign, fit, residuals, members=None) -> SandwichParts:
    """Assemble the sandwich pieces at one fitted point.

    ``fit`` is the LocalFit at design.v; its stored Hessian supplies
    A_hat without re-evaluation.
    """
    a = -fit.hessian
    pi = pi_hat(ds, design, fit.params, residuals, members)
    b = b_hat(ds, design, fit.params, members)
    sigma, se = sandwich(a, pi, ds.n, design.h)
    return SandwichParts(
        v=design.v,
        h=design.h,
        n=ds.n,
        a_hat=a,
        pi_hat=pi,
        b_hat=b,
        sigma_hat=sigma,
        se=se,
    )


def curve_standard_errors(
    ds, curve, residuals=None, members=None, tau=None
) -> list[int]:
    """Fill pointwise sandwich SEs into curve.se_beta and curve.se_gprime.

    Residual increments are computed once from the curve (with clamped
    coefficient lookups, since boundary grid points fall inside the
    trimmed band) and shared across all grid points. Gap points stay
    NaN. Returns the indices where A_hat was singular (left NaN).
    """
    if residuals is None:
        residuals = residual_increments(ds, curve, tau=tau, clamp=True)
    m, p = curve.beta.shape
    se_beta = np.full((m, p), np.nan)
    se_gprime = np.full(m, np.nan)
    failed = []
    for i, f in enumerate(curve.fits):
        if f is None:
            continue
        design = LocalDesign(
            v=float(curve.grid[i]), h=curve.h, kernel=curve.kernel, tau=tau
        )
        try:
            pi = pi_hat(ds, design, f.params, residuals, members)
            _, se = sandwich(-f.hessian, pi, ds.n, curve.h)
        except SingularAHat:
            failed.append(i)
            continue
        se_beta[i] = se[:p]
        se_gprime[i] = se[-1] / curve.h
    curve.se_beta = se_beta
    curve.se_gprime = se_gprime
    return failed


def confidence_band(curve, level: float = 0.05):
    """Pointwise intervals beta_k(v) +/- z_{1-level/2} se_k(v).

    ``level`` is the miscoverage alpha (0.05 gives 95% intervals). No
    bias correction is applied. Returns (lower, upper) arrays shaped
    like curve.beta, NaN wherever the estimate or its SE is missing.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level!r}")
    if curve.se_beta is None:
        raise ValueError(
            "curve has no standard errors; run curve_standard_errors first"
        )
    z = float(norm.ppf(1.0 - level / 2.0))
    lower = curve.beta - z * curve.se_beta
    upper = curve.beta + z * curve.se_beta
    return lower, upper
