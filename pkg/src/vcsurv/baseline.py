"""Breslow cumulative baseline hazards and kernel-smoothed hazard rates.

The cumulative baseline hazard of member type j is estimated by the step
function

    Lambda_0j(t) = sum_{event times w <= t}
                   d_j(w) / sum_l Y_lj(w) exp{beta(V_lj)'Z_lj + g(V_lj)},

where d_j(w) counts the (possibly tied) type-j events at w and the
fitted coefficient curves supply the relative risks. Because g is
identified only up to an additive constant, the curve's anchoring
convention is absorbed here: shifting g by c multiplies every increment
by exp(-c). Baseline hazards are therefore interpreted jointly with the
curve that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .kernels import GAUSSIAN, Kernel, kernel_scaled

__all__ = [
    "StepHazard",
    "SmoothedHazard",
    "breslow",
    "smooth_hazard",
    "record_risk_scores",
]


@dataclass(frozen=True)
class StepHazard:
    """Right-continuous step estimate of a cumulative hazard.

    times : ascending distinct jump times
    increments : positive jump sizes, tied events merged into one jump
    """

    times: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        inc = np.asarray(self.increments, dtype=float)
        if t.shape != inc.shape or t.ndim != 1:
            raise ValueError("times and increments must be 1-d of equal length")
        if t.shape[0] and np.any(np.diff(t) <= 0):
            raise ValueError("jump times must be strictly ascending")
        if np.any(inc <= 0) or not np.all(np.isfinite(inc)):
            raise ValueError("increments must be positive and finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "increments", inc)

    @property
    def n_jumps(self) -> int:
        return self.times.shape[0]

    @property
    def cumulative(self) -> np.ndarray:
        """Running totals at the jump times."""
        return np.cumsum(self.increments)

    def cumulative_at(self, t):
        """Lambda(t), right-continuous, 0 before the first jump."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        vals = np.concatenate([[0.0], self.cumulative])
        out = vals[idx]
        return float(out) if np.ndim(t) == 0 else out


def record_risk_scores(ds, j: int, curve, clamp: bool = False) -> np.ndarray:
    """exp{beta(V)'Z + g(V)} for every present record of member j.

    Strict mode (the default) rejects records whose V falls outside the
    curve's fitted coverage, naming the first offending record. With
    clamp=True, values beyond the fitted range use the boundary fit and
    unfitted interior gaps are interpolated across.
    """
    mv = ds.member(j)
    if not clamp:
        bad = ~curve.covers(mv.v)
        if bad.any():
            l = int(np.flatnonzero(bad)[0])
            lo, hi = curve.fitted_range
            cid = mv.cluster_ids[l]
            cid = cid.item() if hasattr(cid, "item") else cid
            raise DataError(
                f"member {j} record for cluster {cid!r} has "
                f"V={mv.v[l]:.6g} outside the fitted curve coverage "
                f"[{lo:.6g}, {hi:.6g}]; widen the grid or pass clamp=True"
            )
    return curve.risk_scores(mv.v, mv.z, clamp=True)


def breslow(ds, j: int, curve, tau=None, clamp: bool = False) -> StepHazard:
    """Breslow estimate of the type-j cumulative baseline hazard.

    At each distinct event time w of member j (through tau), the
    increment is the tied-event count divided by the risk-set sum of the
    fitted relative risks.
    """
    mv = ds.member(j)
    r = record_risk_scores(ds, j, curve, clamp=clamp)
    ev = mv.events_through(tau)
    if ev.shape[0] == 0:
        return StepHazard(np.empty(0), np.empty(0))
    ev_t = mv.time[ev]
    u_t, starts = np.unique(ev_t, return_index=True)
    dead = np.diff(np.append(starts, ev_t.shape[0]))
    csum = np.cumsum(r[mv.desc])
    prefix = np.searchsorted(-mv.time_desc, -u_t, side="right")
    denom = csum[prefix - 1]
    return StepHazard(u_t, dead / denom)


@dataclass(frozen=True)
class SmoothedHazard:
    """Kernel-smoothed hazard rate built from a StepHazard.

    lambda(t) = sum_k W_b(t - x_k) dLambda(x_k) over the jump times x_k.
    No boundary correction is applied near t = 0; ``near_boundary``
    flags evaluation points within one bandwidth of zero, where the
    estimate is biased low by truncated kernel mass.
    """

    step: StepHazard
    kernel: Kernel
    b: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        w = kernel_scaled(self.kernel, self.b, t[..., None] - self.step.times)
        out = w @ self.step.increments
        return float(out) if out.ndim == 0 else out

    def near_boundary(self, t):
        """True where t < b, i.e. part of the kernel mass falls below 0."""
        return np.asarray(t, dtype=float) < self.b


def smooth_hazard(
    step: StepHazard, smooth_kernel: Kernel = GAUSSIAN, b: float | None = None
) -> SmoothedHazard:
    """Smooth a cumulative-hazard step function into a hazard rate.

    The smoothing kernel and bandwidth are free choices; the default
    bandwidth is (range of jump times)/20.
    """
    if b is None:
        if step.n_jumps < 2:
            raise ValueError(
                "default bandwidth needs at least two jump times; pass b"
            )
        b = float(step.times[-1] - step.times[0]) / 20.0
    if not b > 0:
        raise ValueError(f"bandwidth must be positive, got {b!r}")
    return SmoothedHazard(step, smooth_kernel, float(b))
