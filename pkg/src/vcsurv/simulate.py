"""Clustered failure-time simulator with Clayton-Cuzick dependence.

Failure times within a cluster are tied together through the joint survival
function

    P(T_1 > t_1, ..., T_J > t_J) = {sum_j S_j(t_j)^(-theta) - (J - 1)}^(-1/theta),

where S_j is the marginal survival function of member type j and theta > 0
sets the strength of association (Kendall's tau equals theta / (2 + theta)).
Marginals follow the varying-coefficient hazard

    lambda_j(t | Z, V) = 4 t^3 lambda*_j exp{beta(V)' Z + g(V)},

so Lambda_j(T) = T^4 lambda*_j exp{beta(V)' Z + g(V)} is unit exponential.

Sampling works by sequential conditional inversion.  Write E_k for the
cluster's dependent unit-exponential variates; then T_k is recovered as
(E_k / (lambda*_k r_k))^{1/4} with r_k the subject's relative risk.
Conditioning the copula on its first k - 1 margins leaves a closed-form
inverse for the k-th.  With psi_0 = 1 and independent uniforms w_k,

    q_k   = (1 - w_k)^(-theta / (1 + (k - 1) theta)),
    E_k   = (1 / theta) log(psi_{k-1} (q_k - 1) + 1),
    psi_k = psi_{k-1} q_k.

The first margin reduces to E_1 = -log(1 - w_1).

Randomness is split into three substreams derived from the scenario seed
with a counter-based generator: stream 0 covariates, stream 1 failure
uniforms, stream 2 censoring.  Changing the censoring bound therefore never
perturbs covariates or failure times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .data import Dataset
from .errors import DataError

__all__ = [
    "UNIFORM_EPS",
    "MvNormalZ",
    "StdNormalZ",
    "SimScenario",
    "RawSample",
    "clayton_exponentials",
    "gen_covariates",
    "gen_failure_times",
    "gen_censoring",
    "risk_scores",
    "simulate_raw",
    "simulate_dataset",
    "set1_scenario",
    "set2_scenario",
]

# Uniform draws are clamped to [UNIFORM_EPS, 1 - UNIFORM_EPS] before any
# log or power so the inversion never sees 0 or 1.
UNIFORM_EPS = 1e-12

_COVARIATE_STREAM = 0
_FAILURE_STREAM = 1
_CENSOR_STREAM = 2


def _stream(seed: int, stream: int) -> np.random.Generator:
    """Independent substream `stream` of the master `seed`."""
    seq = np.random.SeedSequence(entropy=(int(seed), int(stream)))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class MvNormalZ:
    """Jointly normal covariates: mean 0, common SD, corr(Z_l, Z_k) = rho^|l-k|."""

    p: int = 2
    sd: float = 5.0
    rho: float = 1.0 / math.sqrt(5.0)

    def __post_init__(self):
        if self.p < 1:
            raise DataError("covariate dimension must be at least 1")
        if self.sd <= 0:
            raise DataError("covariate standard deviation must be positive")
        if not abs(self.rho) < 1:
            raise DataError("covariate correlation must lie in (-1, 1)")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = np.arange(self.p)
        cov = self.sd**2 * self.rho ** np.abs(idx[:, None] - idx[None, :])
        chol = np.linalg.cholesky(cov)
        return rng.standard_normal((size, self.p)) @ chol.T


@dataclass(frozen=True)
class StdNormalZ:
    """Independent standard normal covariates."""

    p: int = 1

    def __post_init__(self):
        if self.p < 1:
            raise DataError("covariate dimension must be at least 1")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.standard_normal((size, self.p))


@dataclass(frozen=True)
class SimScenario:
    """Complete description of one simulated design.

    `beta_fns` and `g_fn` must accept numpy arrays elementwise.  `v_range`
    is the support of the uniform exposure V; censoring is uniform on
    (0, censor_c) independently of everything else.
    """

    n: int
    J: int
    theta: float
    lambda_star: tuple[float, ...]
    beta_fns: tuple[Callable, ...]
    g_fn: Callable
    v_range: tuple[float, float]
    z_dist: MvNormalZ | StdNormalZ
    censor_c: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "lambda_star", tuple(float(x) for x in self.lambda_star))
        object.__setattr__(self, "beta_fns", tuple(self.beta_fns))
        object.__setattr__(self, "v_range", (float(self.v_range[0]), float(self.v_range[1])))
        if self.n < 1:
            raise DataError("scenario needs at least one cluster")
        if self.J < 1:
            raise DataError("scenario needs at least one member type")
        if len(self.lambda_star) != self.J:
            raise DataError(
                f"lambda_star has {len(self.lambda_star)} entries for {self.J} member types"
            )
        if not self.theta > 0:
            raise DataError("dependence parameter theta must be positive")
        if any(lam <= 0 for lam in self.lambda_star):
            raise DataError("baseline scale parameters must be positive")
        if not self.censor_c > 0:
            raise DataError("censoring bound must be positive")
        if not self.v_range[0] < self.v_range[1]:
            raise DataError("exposure range must be increasing")
        if len(self.beta_fns) != self.z_dist.p:
            raise DataError(
                f"{len(self.beta_fns)} coefficient functions for "
                f"{self.z_dist.p}-dimensional covariates"
            )

    @property
    def p(self) -> int:
        return self.z_dist.p


class RawSample(NamedTuple):
    """Pre-censoring draw: exposures, covariates, failure and censoring times."""

    v: np.ndarray  # (n, J)
    z: np.ndarray  # (n, J, p)
    t: np.ndarray  # (n, J) latent failure times
    c: np.ndarray  # (n, J) censoring times


def clayton_exponentials(theta: float, w: np.ndarray) -> np.ndarray:
    """Map independent uniforms (n, J) to dependent unit exponentials.

    Sequential conditional inversion of the Clayton copula, column by
    column; see the module docstring for the recurrence.  Each column is
    marginally Exp(1) and adjacent columns have Kendall's tau equal to
    theta / (2 + theta).
    """
    w = np.clip(np.asarray(w, dtype=float), UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    if w.ndim != 2:
        raise DataError("uniform draws must be an (n, J) array")
    n, J = w.shape
    out = np.empty((n, J))
    psi = np.ones(n)
    for k in range(J):
        q = (1.0 - w[:, k]) ** (-theta / (1.0 + k * theta))
        out[:, k] = np.log(psi * (q - 1.0) + 1.0) / theta
        psi = psi * q
    return out


def gen_covariates(scn: SimScenario, rng: np.random.Generator):
    """Draw (V, Z): V uniform over the scenario range, Z from the z law."""
    lo, hi = scn.v_range
    v = rng.uniform(lo, hi, size=(scn.n, scn.J))
    z = scn.z_dist.sample(rng, scn.n * scn.J).reshape(scn.n, scn.J, scn.p)
    return v, z


def risk_scores(scn: SimScenario, v: np.ndarray, z: np.ndarray) -> np.ndarray:
    """True relative risks exp{beta(V)' Z + g(V)}, elementwise over (n, J)."""
    s = np.asarray(scn.g_fn(v), dtype=float)
    for q, fn in enumerate(scn.beta_fns):
        s = s + np.asarray(fn(v), dtype=float) * z[..., q]
    return np.exp(s)


def gen_failure_times(scn: SimScenario, covariates, rng: np.random.Generator) -> np.ndarray:
    """Dependent failure times with marginal cumulative hazard t^4 lambda*_j r."""
    v, z = covariates
    w = rng.random((scn.n, scn.J))
    exponentials = clayton_exponentials(scn.theta, w)
    lam = np.asarray(scn.lambda_star)
    return (exponentials / (lam[None, :] * risk_scores(scn, v, z))) ** 0.25


def gen_censoring(scn: SimScenario, rng: np.random.Generator) -> np.ndarray:
    """Independent censoring times, uniform on (0, censor_c)."""
    return rng.uniform(0.0, scn.censor_c, size=(scn.n, scn.J))


def simulate_raw(scn: SimScenario) -> RawSample:
    """Generate one replication before censoring is applied.

    Covariates, failure uniforms, and censoring draw from separate
    substreams of the scenario seed, so scenarios differing only in
    `censor_c` share identical covariates and failure times.
    """
    v, z = gen_covariates(scn, _stream(scn.seed, _COVARIATE_STREAM))
    t = gen_failure_times(scn, (v, z), _stream(scn.seed, _FAILURE_STREAM))
    c = gen_censoring(scn, _stream(scn.seed, _CENSOR_STREAM))
    return RawSample(v, z, t, c)


def simulate_dataset(scn: SimScenario) -> Dataset:
    """One fully reproducible replication as a Dataset (X = T ^ C, event = T <= C)."""
    raw = simulate_raw(scn)
    time = np.minimum(raw.t, raw.c)
    status = raw.t <= raw.c
    return Dataset.from_arrays(time, status, raw.v, raw.z)


def set1_scenario(
    n: int = 200,
    theta: float = 0.25,
    censor_c: float = 2.0,
    seed: int = 0,
) -> SimScenario:
    """Three-member clusters with two correlated covariates on V in [0, 3].

    Coefficients beta_1(v) = 0.5 v (1.5 - v) and beta_2(v) = sin(2v) with
    shared shift g(v) = 0.5 {exp(v - 1.5) - exp(-1.5)}.  The covariate
    spread (SD 1.3) and the baseline scales, in ratio 0.2 : 1 : 1.5, are
    calibrated to the benchmark operating characteristics: roughly 30%
    censoring at censor_c = 2 and 10% at censor_c = 5, with local fits at
    h = 0.15, v = 1.5 having sampling SD near 0.114 for 200 clusters.
    """
    return SimScenario(
        n=n,
        J=3,
        theta=theta,
        lambda_star=(1.6, 8.0, 12.0),
        beta_fns=(
            lambda v: 0.5 * v * (1.5 - v),
            lambda v: np.sin(2.0 * v),
        ),
        g_fn=lambda v: 0.5 * (np.exp(v - 1.5) - math.exp(-1.5)),
        v_range=(0.0, 3.0),
        z_dist=MvNormalZ(p=2, sd=1.3),
        censor_c=censor_c,
        seed=seed,
    )


def set2_scenario(
    n: int = 200,
    theta: float = 0.25,
    censor_c: float = 2.0,
    seed: int = 0,
) -> SimScenario:
    """Three-member clusters with one centered normal covariate on V in [0, 1].

    beta(v) = exp(2v - 1) and g(v) = 8 v (1 - v).  As with the first
    preset, the covariate spread (SD 1.4) and the baseline scales (same
    0.2 : 1 : 1.5 ratio and overall level as `set1_scenario`) are
    calibrated to the benchmark operating characteristics: roughly 24%
    censoring at censor_c = 2 and 10% at censor_c = 5, with mean average
    squared error near 0.012 for one-step curves at bandwidth 0.2 on 200
    clusters.
    """
    return SimScenario(
        n=n,
        J=3,
        theta=theta,
        lambda_star=(1.6, 8.0, 12.0),
        beta_fns=(lambda v: np.exp(2.0 * v - 1.0),),
        g_fn=lambda v: 8.0 * v * (1.0 - v),
        v_range=(0.0, 1.0),
        z_dist=MvNormalZ(p=1, sd=1.4, rho=0.0),
        censor_c=censor_c,
        seed=seed,
    )
