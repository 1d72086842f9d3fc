"""Local pseudo-partial likelihood for varying-coefficient hazards.

The marginal hazard of member j in cluster i is modeled as

    lambda_ij(t) = lambda_0j(t) exp{ beta(V_ij)' Z_ij + g(V_ij) },

with smooth coefficient functions beta (p-vector) and g. Around an
evaluation point v, beta and g are replaced by their local linear
expansions, giving the working covariate vector

    X*_ij = (Z_ij', Z_ij'(V_ij - v), V_ij - v)'      in R^{2p+1}

with parameter xi = (delta', eta', gamma')' standing for (beta(v),
beta'(v), g'(v)). The local pseudo-partial log-likelihood is

    l_n(xi) = n^-1 sum_j sum_i int_0^tau K_h(V_ij - v)
              [ xi'X*_ij - log sum_l Y_lj(w) exp(xi'X*_lj) K_h(V_lj - v) ]
              dN_ij(w),

a sum of kernel-weighted Cox-type terms, one per failure type, and
concave in xi.

Derivatives are taken in rescaled coordinates: with H = diag(1_p, h_{p+1})
and U* = H^-1 X*, the gradient and Hessian returned here are with respect
to phi = H xi. This keeps all components on comparable scales; the first
p entries correspond to beta(v) directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoLocalData
from .kernels import GAUSSIAN, Kernel, kernel_scaled

__all__ = [
    "LocalParams",
    "LocalDesign",
    "LocalEvaluator",
    "s_hat",
    "local_loglik",
    "local_score",
    "local_hessian",
    "h_scale_vector",
]


def h_scale_vector(p: int, h: float) -> np.ndarray:
    """Diagonal of H = diag(1 x p, h x (p+1)) mapping xi to phi = H xi."""
    out = np.full(2 * p + 1, h, dtype=float)
    out[:p] = 1.0
    return out


@dataclass(frozen=True)
class LocalParams:
    """Local parameter xi = (delta, eta, gamma) at an evaluation point.

    delta : (p,) value of beta(v)
    eta   : (p,) value of beta'(v)
    gamma : scalar value of g'(v)
    """

    delta: np.ndarray
    eta: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "delta", np.atleast_1d(np.asarray(self.delta, float)))
        object.__setattr__(self, "eta", np.atleast_1d(np.asarray(self.eta, float)))
        if self.delta.shape != self.eta.shape:
            raise ValueError("delta and eta must have the same length")

    @property
    def p(self) -> int:
        return self.delta.shape[0]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.delta, self.eta, [self.gamma]])

    @classmethod
    def from_vector(cls, vec) -> "LocalParams":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.shape[0] % 2 == 0:
            raise ValueError(f"xi must be a vector of odd length, got {vec.shape}")
        p = (vec.shape[0] - 1) // 2
        return cls(delta=vec[:p].copy(), eta=vec[p : 2 * p].copy(), gamma=float(vec[-1]))

    @classmethod
    def zero(cls, p: int) -> "LocalParams":
        return cls(delta=np.zeros(p), eta=np.zeros(p), gamma=0.0)


@dataclass(frozen=True)
class LocalDesign:
    """Where and how to localize: evaluation point, bandwidth, kernel, horizon.

    tau limits the event-time integral to [0, tau]; None means through the
    last observed time.
    """

    v: float
    h: float
    kernel: Kernel = GAUSSIAN
    tau: float | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"bandwidth must be positive, got {self.h!r}")


def _as_xi_vector(xi, p: int) -> np.ndarray:
    if isinstance(xi, LocalParams):
        vec = xi.to_vector()
    else:
        vec = np.asarray(xi, dtype=float)
    if vec.shape != (2 * p + 1,):
        raise ValueError(f"xi must have length {2 * p + 1}, got {vec.shape}")
    return vec


def _u_columns(z, vdiff, h):
    """Rescaled design rows U* = (Z, Z (V-v)/h, (V-v)/h) for given records."""
    s = vdiff / h
    return np.concatenate([z, z * s[:, None], s[:, None]], axis=1)


class _MemberLocal:
    """Per-failure-type evaluation engine at one (v, h).

    Precomputes, once per evaluation point, the kernel weights, rescaled
    design rows in descending-time order, event tie groups and risk-set
    prefix lengths. ``contributions`` then produces this member's share of
    the log-likelihood, score and Hessian for any phi with three
    cumulative-sum passes.
    """

    def __init__(self, mv, design: LocalDesign):
        v, h = design.v, design.h
        vdiff = mv.v - v
        w_all = kernel_scaled(design.kernel, h, vdiff)

        ev = mv.events_through(design.tau)
        # effective event count: h * sum of K_h over events = sum of K(./h)
        self.effective_events = float(h * w_all[ev].sum())
        evk = ev[w_all[ev] > 0.0]
        self.m_events = evk.shape[0]

        # risk-set structures exist whenever any record carries weight,
        # even with no weighted events: residual scores still need them
        kept_mask = w_all > 0.0
        self.n_kept = int(kept_mask.sum())
        if self.n_kept:
            desc_kept = mv.desc[kept_mask[mv.desc]]
            self.time_desc = mv.time[desc_kept]
            self.logw_desc = np.log(w_all[desc_kept])
            self.U_desc = _u_columns(mv.z[desc_kept], vdiff[desc_kept], h)
        if self.m_events == 0:
            return

        inv = np.empty(mv.n_present, dtype=np.intp)
        inv[desc_kept] = np.arange(desc_kept.shape[0])
        self.ev_pos = inv[evk]  # event rows as positions in the desc ordering

        ev_t = mv.time[evk]  # ascending
        self.ev_w = w_all[evk]
        self.ev_U = _u_columns(mv.z[evk], vdiff[evk], h)
        u_t, starts = np.unique(ev_t, return_index=True)
        self.grp_starts = starts
        self.uniq_times = u_t
        self.grp_w = np.add.reduceat(self.ev_w, starts)
        self.grp_wU = np.add.reduceat(self.ev_w[:, None] * self.ev_U, starts, axis=0)
        counts = np.diff(np.append(starts, self.m_events))
        self.ev_grp = np.repeat(np.arange(u_t.shape[0]), counts)
        # risk set at each unique event time is a prefix of the desc ordering
        self.prefix = np.searchsorted(-self.time_desc, -u_t, side="right")

    def _risk_sums(self, phi, order: int):
        """Risk-set sums R_k at each unique event time, k = 0..order.

        Returns (log_R0_raw, R0, R1, R2) where R0/R1/R2 share a common
        rescaling by exp(max) (their ratios are the S-hat ratios), and
        log_R0_raw is the unrescaled log of sum Y exp(phi'U) K_h.
        """
        s = self.U_desc @ phi + self.logw_desc
        mstar = s.max()
        e = np.exp(s - mstar)
        idx = self.prefix - 1
        c0 = np.cumsum(e)
        R0 = c0[idx]
        if np.any(R0 <= 0.0):
            # extreme phi: the shared rescaling underflowed some prefix;
            # redo those groups with a prefix-local rescaling
            R1 = np.zeros((idx.shape[0], self.U_desc.shape[1]))
            R2 = np.zeros(R1.shape + (R1.shape[1],))
            logR0 = np.empty(idx.shape[0])
            for u in range(idx.shape[0]):
                sl = s[: self.prefix[u]]
                mu = sl.max()
                el = np.exp(sl - mu)
                t0 = el.sum()
                logR0[u] = mu + np.log(t0)
                R0[u] = 1.0  # ratios below use prefix-local scaling
                if order >= 1:
                    R1[u] = (el @ self.U_desc[: self.prefix[u]]) / t0
                if order >= 2:
                    Ul = self.U_desc[: self.prefix[u]]
                    R2[u] = np.einsum("l,li,lj->ij", el, Ul, Ul) / t0
            return logR0, R0, R1, R2
        logR0 = mstar + np.log(R0)
        R1 = R2 = None
        if order >= 1:
            c1 = np.cumsum(e[:, None] * self.U_desc, axis=0)
            R1 = c1[idx]
        if order >= 2:
            c2 = np.cumsum(
                np.einsum("l,li,lj->lij", e, self.U_desc, self.U_desc), axis=0
            )
            R2 = c2[idx]
        return logR0, R0, R1, R2

    def contributions(self, phi, need_loglik=True, need_score=True, need_hessian=True):
        """Unnormalized (ll, score, hessian) sums for this member type."""
        d = phi.shape[0]
        if self.m_events == 0:
            return 0.0, np.zeros(d), np.zeros((d, d))
        order = 2 if need_hessian else (1 if need_score else 0)
        logR0, R0, R1, R2 = self._risk_sums(phi, order)
        ll = 0.0
        score = np.zeros(d)
        hess = np.zeros((d, d))
        if need_loglik:
            s = self.U_desc @ phi + self.logw_desc
            phiU_e = s[self.ev_pos] - self.logw_desc[self.ev_pos]
            ll = float(self.ev_w @ (phiU_e - logR0[self.ev_grp]))
        if need_score or need_hessian:
            ehat = R1 / R0[:, None]
        if need_score:
            score = self.grp_wU.sum(axis=0) - self.grp_w @ ehat
        if need_hessian:
            vmat = R2 / R0[:, None, None] - np.einsum("ui,uj->uij", ehat, ehat)
            hess = -np.einsum("u,uij->ij", self.grp_w, vmat)
        return ll, score, hess

    def event_stats(self, phi):
        """Unique event times and S1/S0 ratios there, for residual scores."""
        d = phi.shape[0]
        if self.m_events == 0:
            return np.empty(0), np.empty((0, d))
        _, R0, R1, _ = self._risk_sums(phi, order=1)
        return self.uniq_times, R1 / R0[:, None]

    def ehat_at(self, phi, times):
        """S1/S0 ratios at arbitrary times; zero rows where S0 vanishes.

        A zero row is only ever multiplied by terms that vanish with it
        (no kernel-weighted record is at risk there), so the placeholder
        never leaks into results.
        """
        times = np.asarray(times, dtype=float)
        d = phi.shape[0]
        out = np.zeros((times.shape[0], d))
        if self.n_kept == 0:
            return out
        prefix = np.searchsorted(-self.time_desc, -times, side="right")
        nz = prefix > 0
        if not nz.any():
            return out
        s = self.U_desc @ phi + self.logw_desc
        e = np.exp(s - s.max())
        idx = prefix[nz] - 1
        R0 = np.cumsum(e)[idx]
        if np.any(R0 <= 0.0):
            for k in np.flatnonzero(nz):
                sl = s[: prefix[k]]
                el = np.exp(sl - sl.max())
                out[k] = (el @ self.U_desc[: prefix[k]]) / el.sum()
            return out
        R1 = np.cumsum(e[:, None] * self.U_desc, axis=0)[idx]
        out[nz] = R1 / R0[:, None]
        return out


class LocalEvaluator:
    """Pooled local likelihood at one evaluation point.

    Builds the per-member engines once; ``loglik``, ``score``, ``hessian``
    and the combined ``evaluate`` then work for any parameter value.
    ``members`` restricts the sum to a subset of failure types (used by
    per-type fits); default is all types.
    """

    def __init__(self, ds, design: LocalDesign, members=None):
        self.ds = ds
        self.design = design
        self.p = ds.p
        self.d = 2 * ds.p + 1
        self.n = ds.n
        self.members = list(members) if members is not None else list(range(1, ds.J + 1))
        self._locals = {j: _MemberLocal(ds.member(j), design) for j in self.members}
        self.effective_events = float(
            sum(ml.effective_events for ml in self._locals.values())
        )
        self.total_events = int(sum(ml.m_events for ml in self._locals.values()))
        self.hvec = h_scale_vector(ds.p, design.h)

    def _require_events(self):
        if self.total_events == 0:
            raise NoLocalData(self.design.v, self.effective_events, 0.0)

    def evaluate(self, phi, need_loglik=True, need_score=True, need_hessian=True):
        """(loglik, score, hessian) at phi = H xi, each scaled by 1/n.

        Score and Hessian are derivatives with respect to phi.
        """
        self._require_events()
        phi = np.asarray(phi, dtype=float)
        ll = 0.0
        score = np.zeros(self.d)
        hess = np.zeros((self.d, self.d))
        for j in self.members:
            l, s, hmat = self._locals[j].contributions(
                phi, need_loglik, need_score, need_hessian
            )
            ll += l
            score += s
            hess += hmat
        inv_n = 1.0 / self.n
        return ll * inv_n, score * inv_n, hess * inv_n

    def loglik(self, phi) -> float:
        return self.evaluate(phi, True, False, False)[0]

    def score(self, phi) -> np.ndarray:
        return self.evaluate(phi, False, True, False)[1]

    def hessian(self, phi) -> np.ndarray:
        return self.evaluate(phi, False, False, True)[2]

    def phi_of(self, xi) -> np.ndarray:
        return _as_xi_vector(xi, self.p) * self.hvec

    def xi_of(self, phi) -> LocalParams:
        return LocalParams.from_vector(np.asarray(phi, float) / self.hvec)

    def member_event_stats(self, j: int, phi):
        """(unique event times, E_hat rows) for member j at phi."""
        self._require_events()
        return self._locals[j].event_stats(np.asarray(phi, dtype=float))

    def member_ehat_at(self, j: int, phi, times):
        """E_hat rows for member j at arbitrary times (zero where S0 = 0)."""
        return self._locals[j].ehat_at(np.asarray(phi, dtype=float), times)


def s_hat(ds, design: LocalDesign, j: int, w: float, xi, k: int):
    """Kernel-weighted risk-set moment S_njk(w, v; xi).

    (1/n) sum_l K_h(V_lj - v) Y_lj(w) exp(xi' X*_lj) (U*_lj)^{tensor k},
    with Y_lj(w) = 1{X_lj >= w} over present records of member j.
    Returns a float (k=0), a (2p+1,) vector (k=1) or matrix (k=2).
    """
    if k not in (0, 1, 2):
        raise ValueError(f"k must be 0, 1 or 2, got {k!r}")
    vec = _as_xi_vector(xi, ds.p)
    mv = ds.member(j)
    vdiff = mv.v - design.v
    wts = kernel_scaled(design.kernel, design.h, vdiff)
    mask = (mv.time >= w) & (wts > 0.0)
    d = 2 * ds.p + 1
    if not mask.any():
        if k == 0:
            return 0.0
        return np.zeros(d) if k == 1 else np.zeros((d, d))
    U = _u_columns(mv.z[mask], vdiff[mask], design.h)
    phi = vec * h_scale_vector(ds.p, design.h)
    terms = wts[mask] * np.exp(U @ phi)
    if k == 0:
        return float(terms.sum() / ds.n)
    if k == 1:
        return (terms @ U) / ds.n
    return np.einsum("l,li,lj->ij", terms, U, U) / ds.n


def local_loglik(ds, design: LocalDesign, xi, members=None) -> float:
    """Local pseudo-partial log-likelihood l_n(xi) at the design point.

    Raises NoLocalData when no event carries positive kernel weight.
    """
    ev = LocalEvaluator(ds, design, members)
    return ev.loglik(ev.phi_of(xi))


def local_score(ds, design: LocalDesign, xi, members=None) -> np.ndarray:
    """Gradient of the local log-likelihood in rescaled (phi = H xi) coordinates.

    Equals (1/n) sum over events of K_h(V - v) [U* - S1/S0] at the event time.
    """
    ev = LocalEvaluator(ds, design, members)
    return ev.score(ev.phi_of(xi))


def local_hessian(ds, design: LocalDesign, xi, members=None) -> np.ndarray:
    """Hessian in rescaled coordinates; negative semidefinite by construction.

    Equals -(1/n) sum over events of K_h(V - v) [S2/S0 - (S1/S0)^2].
    """
    ev = LocalEvaluator(ds, design, members)
    return ev.hessian(ev.phi_of(xi))
