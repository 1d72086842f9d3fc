import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import (
    fd_gradient,
    fd_jacobian,
    loglik_in_phi,
    naive_loglik,
    naive_s_hat,
    naive_score,
)
from vcsurv.data import Dataset
from vcsurv.errors import NoLocalData
from vcsurv.kernels import EPANECHNIKOV, GAUSSIAN, kernel_scaled
from vcsurv.loclik import (
    LocalDesign,
    LocalEvaluator,
    LocalParams,
    h_scale_vector,
    local_hessian,
    local_loglik,
    local_score,
    s_hat,
)

from conftest import make_clustered


def random_xi(rng, p, scale=0.5):
    return rng.normal(0.0, scale, size=2 * p + 1)


def test_local_params_round_trip():
    lp = LocalParams(delta=[0.3, -0.1], eta=[1.0, 0.5], gamma=-0.2)
    vec = lp.to_vector()
    assert vec.shape == (5,)
    back = LocalParams.from_vector(vec)
    assert_allclose(back.delta, lp.delta)
    assert_allclose(back.eta, lp.eta)
    assert back.gamma == lp.gamma
    assert LocalParams.zero(3).to_vector().sum() == 0.0


def test_h_scale_vector():
    assert_allclose(h_scale_vector(2, 0.25), [1, 1, 0.25, 0.25, 0.25])


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("seed", [0, 1])
def test_s_hat_matches_naive(ds_small, k, seed):
    rng = np.random.default_rng(seed)
    design = LocalDesign(v=1.4, h=0.6)
    xi = random_xi(rng, ds_small.p)
    for w in [0.2, 0.9]:
        got = s_hat(ds_small, design, 1, w, xi, k)
        want = naive_s_hat(ds_small, design, 1, w, xi, k)
        assert_allclose(got, want, rtol=1e-12, atol=1e-14)


def test_s_hat_single_record():
    # one record at risk with V = v and xi = 0: S_0 = K_h(0) = K(0)/h
    ds = Dataset.from_arrays(
        time=[[1.0]], status=[[1]], v=[[1.5]], z=np.zeros((1, 1, 1))
    )
    design = LocalDesign(v=1.5, h=0.4)
    got = s_hat(ds, design, 1, 0.5, np.zeros(3), 0)
    assert_allclose(got, float(kernel_scaled(GAUSSIAN, 0.4, 0.0)), rtol=1e-14)


def test_loglik_single_event_closed_form():
    # single cluster, single member, one event at its own V = v:
    # the xi terms cancel and l = -K_h(0) log K_h(0) for any xi
    ds = Dataset.from_arrays(
        time=[[2.0]], status=[[1]], v=[[0.7]], z=np.ones((1, 1, 1))
    )
    design = LocalDesign(v=0.7, h=1.0)
    k0 = float(kernel_scaled(GAUSSIAN, 1.0, 0.0))
    want = -k0 * np.log(k0)  # = 0.3666034...
    assert_allclose(want, 0.3666034339854198, rtol=1e-12)
    for xi in [np.zeros(3), np.array([1.2, -0.4, 2.0])]:
        assert_allclose(local_loglik(ds, design, xi), want, rtol=1e-12)
    # same identity at a different bandwidth
    design2 = LocalDesign(v=0.7, h=0.5)
    k0 = float(kernel_scaled(GAUSSIAN, 0.5, 0.0))
    assert_allclose(local_loglik(ds, design2, np.zeros(3)), -k0 * np.log(k0), rtol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_loglik_matches_naive(ds_small, seed):
    rng = np.random.default_rng(100 + seed)
    design = LocalDesign(v=rng.uniform(0.5, 2.5), h=rng.uniform(0.3, 1.0))
    xi = random_xi(rng, ds_small.p)
    got = local_loglik(ds_small, design, xi)
    want = naive_loglik(ds_small, design, xi)
    assert_allclose(got, want, rtol=1e-10)


def test_loglik_respects_tau(ds_small):
    design = LocalDesign(v=1.2, h=0.8, tau=0.8)
    xi = np.array([0.2, -0.1, 0.05, 0.0, 0.3])
    assert_allclose(
        local_loglik(ds_small, design, xi), naive_loglik(ds_small, design, xi), rtol=1e-10
    )
    full = local_loglik(ds_small, LocalDesign(v=1.2, h=0.8), xi)
    assert local_loglik(ds_small, design, xi) != full


def test_loglik_member_subset(ds_small):
    design = LocalDesign(v=1.5, h=0.7)
    xi = np.array([0.1, 0.2, -0.3, 0.1, 0.0])
    for members in ([1], [2]):
        got = local_loglik(ds_small, design, xi, members=members)
        want = naive_loglik(ds_small, design, xi, members=members)
        assert_allclose(got, want, rtol=1e-10)
    both = local_loglik(ds_small, design, xi)
    assert_allclose(
        both,
        local_loglik(ds_small, design, xi, members=[1])
        + local_loglik(ds_small, design, xi, members=[2]),
        rtol=1e-10,
    )


@pytest.mark.parametrize("seed", [3, 4])
def test_score_matches_naive_and_fd(ds_small, seed):
    rng = np.random.default_rng(seed)
    design = LocalDesign(v=1.3, h=0.6)
    xi = random_xi(rng, ds_small.p)
    got = local_score(ds_small, design, xi)
    assert_allclose(got, naive_score(ds_small, design, xi), rtol=1e-9, atol=1e-12)
    phi = xi * h_scale_vector(ds_small.p, design.h)
    fd = fd_gradient(loglik_in_phi(ds_small, design), phi, eps=1e-5)
    assert_allclose(got, fd, rtol=5e-5, atol=5e-7)


@pytest.mark.parametrize("seed", [5, 6])
def test_hessian_matches_fd_and_is_nsd(ds_small, seed):
    rng = np.random.default_rng(seed)
    design = LocalDesign(v=1.7, h=0.7)
    xi = random_xi(rng, ds_small.p)
    H = local_hessian(ds_small, design, xi)
    assert_allclose(H, H.T, atol=1e-12)
    ev = LocalEvaluator(ds_small, design)

    def score_of_phi(phi):
        return ev.score(phi)

    phi = ev.phi_of(xi)
    fd = fd_jacobian(score_of_phi, phi, eps=1e-5)
    assert_allclose(H, fd, rtol=5e-5, atol=5e-6)
    eigs = np.linalg.eigvalsh(H)
    assert (eigs <= 1e-10).all()


def test_rescaled_vs_raw_coordinates(ds_small):
    # derivatives w.r.t. xi (via naive fd on l(xi)) relate to the rescaled
    # ones by H-conjugation: score_xi = H score_phi, hess_xi = H hess_phi H
    design = LocalDesign(v=1.1, h=0.5)
    xi = np.array([0.3, -0.2, 0.4, 0.1, -0.5])
    hvec = h_scale_vector(ds_small.p, design.h)

    def l_of_xi(x):
        return naive_loglik(ds_small, design, x)

    score_phi = local_score(ds_small, design, xi)
    fd_xi = fd_gradient(l_of_xi, xi, eps=1e-5)
    assert_allclose(hvec * score_phi, fd_xi, rtol=5e-5, atol=5e-7)
    hess_phi = local_hessian(ds_small, design, xi)
    ev = LocalEvaluator(ds_small, design)

    def score_xi_fn(x):
        return hvec * ev.score(x * hvec)

    fd_hess_xi = fd_jacobian(score_xi_fn, xi, eps=1e-5)
    assert_allclose(np.outer(hvec, hvec) * hess_phi, fd_hess_xi, rtol=5e-5, atol=5e-6)


def test_concavity_along_segments(ds_small):
    design = LocalDesign(v=1.5, h=0.8)
    rng = np.random.default_rng(42)
    for _ in range(5):
        a = random_xi(rng, ds_small.p, scale=0.8)
        b = random_xi(rng, ds_small.p, scale=0.8)
        t = rng.uniform(0.2, 0.8)
        la = local_loglik(ds_small, design, a)
        lb = local_loglik(ds_small, design, b)
        lm = local_loglik(ds_small, design, t * a + (1 - t) * b)
        assert lm >= t * la + (1 - t) * lb - 1e-10


def test_zero_weight_clusters_are_inert():
    # with a compact kernel, clusters entirely outside the window can be
    # deleted without changing anything
    ds = make_clustered(seed=3, n=40, J=2, p=2)
    design = LocalDesign(v=1.5, h=0.5, kernel=EPANECHNIKOV)
    inside = (np.abs(ds.v - design.v) <= design.h).any(axis=1)
    trimmed = Dataset.from_arrays(
        time=ds.time[inside],
        status=ds.status[inside],
        v=ds.v[inside],
        z=ds.z[inside],
        cluster_ids=ds.cluster_ids[inside],
    )
    xi = np.array([0.2, -0.1, 0.3, 0.0, 0.1])
    # 1/n normalization differs; compare unnormalized quantities
    l_full = local_loglik(ds, design, xi) * ds.n
    l_trim = local_loglik(trimmed, design, xi) * trimmed.n
    assert l_full == l_trim
    s_full = local_score(ds, design, xi) * ds.n
    s_trim = local_score(trimmed, design, xi) * trimmed.n
    assert_allclose(s_full, s_trim, atol=0)


def test_no_weighted_events_raises():
    ds = make_clustered(seed=5, n=20, J=1, p=1)
    design = LocalDesign(v=50.0, h=0.2, kernel=EPANECHNIKOV)
    with pytest.raises(NoLocalData):
        local_loglik(ds, design, np.zeros(3))
    with pytest.raises(NoLocalData):
        local_score(ds, design, np.zeros(3))


def test_effective_events_statistic(ds_small):
    design = LocalDesign(v=1.5, h=0.6)
    ev = LocalEvaluator(ds_small, design)
    want = 0.0
    for j in (1, 2):
        mv = ds_small.member(j)
        for l in range(mv.n_present):
            if mv.status[l]:
                want += design.h * float(
                    kernel_scaled(design.kernel, design.h, mv.v[l] - design.v)
                )
    assert_allclose(ev.effective_events, want, rtol=1e-12)


def test_member_event_stats(ds_small):
    design = LocalDesign(v=1.4, h=0.7)
    ev = LocalEvaluator(ds_small, design)
    xi = np.array([0.1, -0.2, 0.0, 0.1, 0.2])
    phi = ev.phi_of(xi)
    times, ehat = ev.member_event_stats(1, phi)
    for m, w in enumerate(times):
        s0 = naive_s_hat(ds_small, design, 1, w, xi, 0)
        s1 = naive_s_hat(ds_small, design, 1, w, xi, 1)
        assert_allclose(ehat[m], s1 / s0, rtol=1e-10)


def test_extreme_parameters_stay_finite(ds_small):
    # large xi values exercise the log-sum-exp stabilization
    design = LocalDesign(v=1.5, h=0.6)
    xi = np.array([40.0, -35.0, 10.0, -10.0, 25.0])
    val = local_loglik(ds_small, design, xi)
    assert np.isfinite(val)
    assert np.isfinite(local_score(ds_small, design, xi)).all()
    assert np.isfinite(local_hessian(ds_small, design, xi)).all()
