import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from vcsurv.errors import DataError
from vcsurv.simulate import (
    MvNormalZ,
    SimScenario,
    StdNormalZ,
    clayton_exponentials,
    risk_scores,
    set1_scenario,
    set2_scenario,
    simulate_dataset,
    simulate_raw,
)


def flat_scenario(theta, n, seed, lambda_star=(0.2, 1.0, 1.5), censor_c=1e6):
    """Unit relative risk everywhere: marginal survival exp(-t^4 lambda*_j)."""
    return SimScenario(
        n=n,
        J=len(lambda_star),
        theta=theta,
        lambda_star=lambda_star,
        beta_fns=(lambda v: np.zeros_like(v),),
        g_fn=lambda v: np.zeros_like(v),
        v_range=(0.0, 1.0),
        z_dist=StdNormalZ(p=1),
        censor_c=censor_c,
        seed=seed,
    )


def clayton_joint_survival(theta, survivals):
    # independent oracle: closed-form joint survival of the dependence model
    s = np.asarray(survivals, dtype=float)
    return float((np.sum(s**-theta) - (s.size - 1.0)) ** (-1.0 / theta))


def test_unit_time_from_trivial_uniform():
    # w = 1 - 1/e with lambda* and relative risk 1 gives t = 1
    w = np.array([[1.0 - math.exp(-1.0)]])
    for theta in (0.25, 1.0, 4.0):
        e = clayton_exponentials(theta, w)
        t = e**0.25
        assert t[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_first_margin_is_plain_inversion():
    rng = np.random.default_rng(0)
    w = rng.random((500, 3))
    for theta in (0.25, 4.0):
        e = clayton_exponentials(theta, w)
        assert_allclose(e[:, 0], -np.log1p(-w[:, 0]), rtol=1e-10)


def test_extreme_uniforms_are_clamped():
    w = np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 1.0]])
    e = clayton_exponentials(4.0, w)
    assert np.isfinite(e).all()
    assert (e > 0).all()


def test_exponentials_reject_bad_shape():
    with pytest.raises(DataError, match="\\(n, J\\)"):
        clayton_exponentials(1.0, np.zeros(4))


def test_mvnormal_component_moments():
    # default component law: SD 5, corr rho^|l-k| with rho = 1/sqrt(5)
    z = MvNormalZ(p=2).sample(np.random.default_rng(11), 100000)
    assert abs(z[:, 0].std() - 5.0) < 0.05
    assert abs(z[:, 1].std() - 5.0) < 0.05
    corr = np.corrcoef(z[:, 0], z[:, 1])[0, 1]
    assert abs(corr - 1.0 / math.sqrt(5.0)) < 0.01


def test_covariate_moments_set1():
    # preset overrides the covariate spread (calibrated SD 1.3), keeps rho
    scn = set1_scenario(n=34000, seed=11)
    raw = simulate_raw(scn)
    z = raw.z.reshape(-1, 2)
    assert z.shape[0] >= 100000
    assert abs(z[:, 0].std() - 1.3) < 0.02
    assert abs(z[:, 1].std() - 1.3) < 0.02
    corr = np.corrcoef(z[:, 0], z[:, 1])[0, 1]
    assert abs(corr - 1.0 / math.sqrt(5.0)) < 0.01
    v = raw.v.ravel()
    assert v.min() >= 0.0 and v.max() <= 3.0
    assert abs(v.mean() - 1.5) < 0.02


def test_covariate_moments_set2():
    scn = set2_scenario(n=34000, seed=12)
    raw = simulate_raw(scn)
    z = raw.z.ravel()
    assert abs(z.std() - 1.4) < 0.014
    assert abs(z.mean()) < 0.02
    assert raw.v.min() >= 0.0 and raw.v.max() <= 1.0


def test_three_step_correlation_decay():
    # corr(Z_1, Z_3) should be rho^2 under the banded structure
    dist = MvNormalZ(p=3, sd=2.0, rho=0.5)
    z = dist.sample(np.random.default_rng(4), 200000)
    assert abs(np.corrcoef(z[:, 0], z[:, 2])[0, 1] - 0.25) < 0.01


def test_marginal_transform_is_unit_exponential():
    # Lambda(T) = T^4 lambda* exp{beta(V)'Z + g(V)} must be Exp(1), even with
    # covariate-driven risks; check the first and last member types
    scn = set1_scenario(n=100000, theta=0.25, censor_c=5.0, seed=21)
    raw = simulate_raw(scn)
    r = risk_scores(scn, raw.v, raw.z)
    for col in (0, 2):
        u = raw.t[:, col] ** 4 * scn.lambda_star[col] * r[:, col]
        assert stats.kstest(u, "expon").pvalue > 0.01


@pytest.mark.parametrize("theta", [0.25, 1.5, 4.0])
def test_kendall_tau_matches_theta(theta):
    scn = flat_scenario(theta, n=100000, seed=31)
    raw = simulate_raw(scn)
    tau = stats.kendalltau(raw.t[:, 0], raw.t[:, 1]).statistic
    assert abs(tau - theta / (2.0 + theta)) < 0.01


@pytest.mark.parametrize("theta", [0.25, 1.5, 4.0])
def test_joint_survival_probe(theta):
    # flat risks make the marginal survivals deterministic, so the empirical
    # joint survival can be checked against the closed form at probe points
    scn = flat_scenario(theta, n=150000, seed=41)
    lam = np.asarray(scn.lambda_star)
    a = np.array([0.35, 0.7, 0.9])
    t_probe = (a / lam) ** 0.25
    s_marg = np.exp(-a)
    raw = simulate_raw(scn)
    above = raw.t > t_probe[None, :]

    def check(cols):
        emp = above[:, cols].all(axis=1).mean()
        target = clayton_joint_survival(theta, s_marg[cols])
        mc_se = math.sqrt(target * (1.0 - target) / scn.n)
        assert abs(emp - target) <= 3.0 * mc_se, (cols, emp, target, mc_se)

    check([0, 1, 2])
    check([0, 1])
    check([0, 2])
    check([1, 2])


def test_censoring_fractions():
    for c, target, tol in ((5.0, 0.10, 0.03), (2.0, 0.30, 0.03)):
        ds = simulate_dataset(set1_scenario(n=4000, censor_c=c, seed=51))
        frac = 1.0 - ds.status.mean()
        assert abs(frac - target) < tol, (c, frac)
    ds = simulate_dataset(set1_scenario(n=4000, censor_c=1e6, seed=51))
    assert 1.0 - ds.status.mean() < 0.001


def test_same_seed_is_bit_identical():
    a = simulate_dataset(set1_scenario(n=50, seed=7))
    b = simulate_dataset(set1_scenario(n=50, seed=7))
    assert np.array_equal(a.time, b.time)
    assert np.array_equal(a.status, b.status)
    assert np.array_equal(a.v, b.v)
    assert np.array_equal(a.z, b.z)


def test_censoring_stream_is_separate():
    light = simulate_raw(set1_scenario(n=200, censor_c=5.0, seed=3))
    heavy = simulate_raw(set1_scenario(n=200, censor_c=2.0, seed=3))
    assert np.array_equal(light.t, heavy.t)
    assert np.array_equal(light.v, heavy.v)
    assert np.array_equal(light.z, heavy.z)
    assert not np.array_equal(light.c, heavy.c)
    other_theta = simulate_raw(set1_scenario(n=200, theta=4.0, censor_c=5.0, seed=3))
    assert np.array_equal(light.c, other_theta.c)
    assert np.array_equal(light.v, other_theta.v)
    assert not np.array_equal(light.t, other_theta.t)


def test_dataset_shape_set1():
    ds = simulate_dataset(set1_scenario(n=200, seed=1))
    assert (ds.n, ds.J, ds.p) == (200, 3, 2)
    assert ds.present.all()
    assert int(ds.present.sum()) == 600
    assert (ds.time > 0).all()


def test_set2_shape_and_truth():
    scn = set2_scenario(n=50, seed=2)
    assert scn.p == 1
    assert_allclose(scn.beta_fns[0](np.array([0.5])), [1.0])
    assert_allclose(scn.g_fn(np.array([0.5])), [2.0])
    ds = simulate_dataset(scn)
    assert (ds.n, ds.J, ds.p) == (50, 3, 1)


def test_scenario_validation():
    good = dict(
        n=10,
        J=2,
        theta=1.0,
        lambda_star=(1.0, 2.0),
        beta_fns=(lambda v: v,),
        g_fn=lambda v: v,
        v_range=(0.0, 1.0),
        z_dist=StdNormalZ(p=1),
        censor_c=1.0,
        seed=0,
    )
    SimScenario(**good)
    for key, val, msg in [
        ("theta", 0.0, "theta"),
        ("censor_c", 0.0, "censoring"),
        ("lambda_star", (1.0,), "entries"),
        ("lambda_star", (1.0, -2.0), "positive"),
        ("v_range", (1.0, 0.0), "increasing"),
        ("beta_fns", (), "coefficient functions"),
        ("n", 0, "cluster"),
        ("J", 0, "member"),
    ]:
        with pytest.raises(DataError, match=msg):
            SimScenario(**{**good, key: val})
    with pytest.raises(DataError, match="correlation"):
        MvNormalZ(p=2, rho=1.0)
    with pytest.raises(DataError, match="positive"):
        MvNormalZ(p=2, sd=0.0)
    with pytest.raises(DataError, match="dimension"):
        StdNormalZ(p=0)
