import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vcsurv.data import Dataset
from vcsurv.fitting import CurveEstimate
from vcsurv.kernels import GAUSSIAN


def make_clustered(seed, n=30, J=2, p=2, v_range=(0.0, 3.0), z_sd=1.0, censor=2.0):
    """Small synthetic clustered dataset for oracle comparisons.

    Not the package simulator: plain independent draws with a mild
    covariate effect so risk sets are informative.
    """
    rng = np.random.default_rng(seed)
    v = rng.uniform(v_range[0], v_range[1], size=(n, J))
    z = rng.normal(0.0, z_sd, size=(n, J, p))
    rate = np.exp(0.4 * z[:, :, 0] - 0.2 * v)
    t = rng.exponential(1.0 / rate)
    c = rng.uniform(0.0, censor, size=(n, J))
    time = np.minimum(t, c)
    status = (t <= c).astype(int)
    return Dataset.from_arrays(time=time, status=status, v=v, z=z)


def constant_beta_dataset(seed, n=150, b0=0.7, censor=4.0):
    """J = 1, beta(v) = b0 constant, g = 0: a plain Cox model with a noise V."""
    rng = np.random.default_rng(seed)
    z = rng.normal(0.0, 1.0, size=(n, 1, 1))
    v = rng.uniform(0.0, 3.0, size=(n, 1))
    t = rng.exponential(np.exp(-b0 * z[:, :, 0]))
    c = rng.uniform(0.0, censor, size=(n, 1))
    return Dataset.from_arrays(
        time=np.minimum(t, c), status=(t <= c).astype(int), v=v, z=z
    )


def constant_curve(lo, hi, beta_const, g_const=0.0, size=11):
    """Synthetic flat curve: beta(v) = const, g(v) = const over [lo, hi]."""
    grid = np.linspace(lo, hi, size)
    beta = np.tile(np.asarray(beta_const, dtype=float), (size, 1))
    p = beta.shape[1]
    return CurveEstimate(
        grid=grid,
        h=0.1,
        kernel=GAUSSIAN,
        beta=beta,
        eta=np.zeros((size, p)),
        gprime=np.zeros(size),
        g=np.full(size, float(g_const)),
        fits=[None] * size,
    )


def three_subject_dataset():
    """Three independent subjects with events at t = 1, 2, 3."""
    return Dataset.from_arrays(
        time=np.array([[1.0], [2.0], [3.0]]),
        status=np.ones((3, 1), dtype=int),
        v=np.array([[0.5], [1.0], [1.5]]),
        z=np.array([[[0.3]], [[-0.2]], [[1.1]]]),
    )


@pytest.fixture
def ds_small():
    return make_clustered(seed=7, n=30, J=2, p=2)


@pytest.fixture
def ds_one_type():
    return make_clustered(seed=11, n=60, J=1, p=1, censor=3.0)
