import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import naive_w_vector
from vcsurv.data import Dataset
from vcsurv.errors import DataError, SingularSigma
from vcsurv.fitting import CurveEstimate, FitOptions, default_grid
from vcsurv.inference import pi_hat, residual_increments, sandwich
from vcsurv.kernels import GAUSSIAN
from vcsurv.loclik import LocalDesign
from vcsurv.multitype import (
    TypeStack,
    combine,
    cross_cov,
    fit_per_type,
    fit_weighted_curve,
    optimal_weights,
    sigma_star,
    w_matrix,
    w_vector,
)

from conftest import make_clustered

TIGHT = FitOptions(gradient_tolerance=1e-13, min_effective_events=0.5)


def duplicated_type_dataset(seed=5, n=30):
    """Two failure types carrying byte-identical records."""
    base = make_clustered(seed=seed, n=n, J=1, p=2)
    mv = base.member(1)
    time = np.stack([mv.time, mv.time], axis=1)
    status = np.stack([mv.status, mv.status], axis=1).astype(int)
    v = np.stack([mv.v, mv.v], axis=1)
    z = np.stack([mv.z, mv.z], axis=1)
    return Dataset.from_arrays(time=time, status=status, v=v, z=z)


def independent_type_dataset(seed, n, beta=0.5):
    """Two types whose failure times are independent given the covariates."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 2, 1))
    v = rng.uniform(0.0, 3.0, size=(n, 2))
    t = rng.exponential(np.exp(-beta * z[..., 0]))
    c = rng.uniform(0.5, 4.0, size=(n, 2))
    time = np.minimum(t, c)
    status = (t <= c).astype(int)
    return Dataset.from_arrays(time=time, status=status, v=v, z=z)


def test_w_matrix_matches_naive_oracle():
    ds = make_clustered(seed=21, n=30, J=2, p=2)
    stack = fit_per_type(ds, v=1.5, h=1.0, opts=TIGHT)
    design = LocalDesign(v=1.5, h=1.0)
    for k in (1, 2):
        w = w_matrix(stack, k)
        xi_vec = stack.fits[k].params.to_vector()
        for j in range(ds.n):
            want = naive_w_vector(ds, design, k, xi_vec, j)
            assert_allclose(w[j], want, rtol=1e-12, atol=1e-13)
            assert_allclose(w_vector(stack, k, j), w[j], atol=0)


def test_w_sums_vanish_at_maximizer(ds_small):
    stack = fit_per_type(ds_small, v=1.5, h=1.0, opts=TIGHT)
    assert not stack.failures
    for k in (1, 2):
        total = w_matrix(stack, k).sum(axis=0)
        assert np.linalg.norm(total) < 1e-8


def test_w_zero_for_early_censored_cluster():
    ds = Dataset.from_arrays(
        time=np.array([[0.5], [1.0], [2.0], [1.5]]),
        status=np.array([[0], [1], [1], [0]]),
        v=np.array([[1.4], [1.5], [1.6], [1.5]]),
        z=np.array([[[0.2]], [[-0.1]], [[0.4]], [[0.3]]]),
    )
    stack = fit_per_type(ds, v=1.5, h=1.0, opts=FitOptions(min_effective_events=0.5))
    w = w_matrix(stack, 1)
    assert_allclose(w[0], np.zeros(3), atol=0)
    assert np.any(w[1] != 0.0)


def test_cross_cov_symmetry_and_oracle():
    ds = make_clustered(seed=21, n=30, J=2, p=2)
    stack = fit_per_type(ds, v=1.5, h=1.0, opts=TIGHT)
    design = LocalDesign(v=1.5, h=1.0)
    d12, g12 = cross_cov(stack, 1, 2)
    d21, g21 = cross_cov(stack, 2, 1)
    assert np.array_equal(d21, d12.T)
    assert np.array_equal(g21, g12.T)
    w_by_type = {
        k: np.stack(
            [
                naive_w_vector(ds, design, k, stack.fits[k].params.to_vector(), j)
                for j in range(ds.n)
            ]
        )
        for k in (1, 2)
    }
    want = (1.0 / ds.n) * (w_by_type[1].T @ w_by_type[2])
    assert_allclose(d12, want, rtol=1e-12, atol=1e-14)
    d11, g11 = cross_cov(stack, 1, 1)
    assert np.array_equal(d11, d11.T)
    assert np.array_equal(g11, g11.T)
    assert np.linalg.eigvalsh(g11).min() > -1e-12


def test_sigma_star_symmetric_psd_blocks(ds_small):
    stack = fit_per_type(ds_small, v=1.5, h=1.0, opts=TIGHT)
    assert stack.fitted == (1, 2)
    sig = sigma_star(stack)
    d = stack.d
    assert sig.shape == (2 * d, 2 * d)
    assert np.array_equal(sig, sig.T)
    for a in range(2):
        block = sig[a * d : (a + 1) * d, a * d : (a + 1) * d]
        assert np.linalg.eigvalsh(block).min() > -1e-12


def test_g11_matches_single_type_sandwich():
    # on single-type data the cross-covariance block and the residual-based
    # sandwich are two representations of the same quantity; feeding the
    # sandwich a curve that is exactly the local linear extension of the fit
    # makes the two residual constructions numerically identical
    ds = make_clustered(seed=9, n=40, J=1, p=2)
    v0, h = 1.5, 0.8
    stack = fit_per_type(ds, v=v0, h=h, opts=TIGHT)
    fit = stack.fits[1]
    mv = ds.member(1)
    grid = np.linspace(mv.v.min(), mv.v.max(), 9)
    size = grid.shape[0]
    delta, eta, gamma = fit.params.delta, fit.params.eta, fit.params.gamma
    curve = CurveEstimate(
        grid=grid,
        h=h,
        kernel=GAUSSIAN,
        beta=delta[None, :] + (grid[:, None] - v0) * eta[None, :],
        eta=np.tile(eta, (size, 1)),
        gprime=np.full(size, gamma),
        g=gamma * (grid - v0),
        fits=[None] * size,
    )
    res = residual_increments(ds, curve)
    design = LocalDesign(v=v0, h=h)
    pi = pi_hat(ds, design, fit.params, res)
    sigma_single, _ = sandwich(-fit.hessian, pi, ds.n, h)
    sig = sigma_star(stack)
    assert_allclose(sig, sigma_single, rtol=1e-8, atol=1e-14)


def test_off_diagonal_blocks_shrink_for_independent_types():
    def mean_abs_g12(n, seeds):
        vals = []
        for s in seeds:
            ds = independent_type_dataset(seed=s, n=n)
            stack = fit_per_type(ds, v=1.5, h=0.7)
            _, g12 = cross_cov(stack, 1, 2)
            vals.append(np.mean(np.abs(g12)))
        return float(np.mean(vals))

    small = mean_abs_g12(100, range(100, 110))
    large = mean_abs_g12(400, range(200, 210))
    assert large <= 0.65 * small


def test_duplicated_types_give_identical_fits():
    ds = duplicated_type_dataset()
    stack = fit_per_type(ds, v=1.5, h=0.8, opts=TIGHT)
    assert stack.fitted == (1, 2)
    assert_allclose(stack.fits[1].phi, stack.fits[2].phi, rtol=0, atol=1e-14)
    est = combine(stack, 0)
    assert_allclose(est.value, stack.fits[1].params.delta[0], rtol=1e-10)
    assert abs(float(np.sum(est.weights)) - 1.0) < 1e-14
    est1 = combine(stack, 1)
    assert_allclose(est1.value, stack.fits[1].params.delta[1], rtol=1e-10)


def test_optimal_weights_closed_forms():
    assert_allclose(optimal_weights(np.eye(3)), np.full(3, 1 / 3), rtol=1e-15)
    got = optimal_weights(np.diag([1.0, 1.0, 4.0]))
    assert_allclose(got, [4 / 9, 4 / 9, 1 / 9], rtol=1e-14)
    assert_allclose(optimal_weights(np.array([[2.5]])), [1.0], atol=0)


def test_optimal_weights_minimize_variance():
    rng = np.random.default_rng(3)
    r = rng.normal(size=(4, 4))
    sigma = r @ r.T + 0.5 * np.eye(4)
    c = optimal_weights(sigma)
    assert abs(c.sum() - 1.0) < 1e-14
    best = float(c @ sigma @ c)
    for _ in range(100):
        if rng.random() < 0.5:
            w = rng.dirichlet(np.ones(4))
        else:
            bump = rng.normal(size=4)
            w = c + (bump - bump.mean())
        assert float(w @ sigma @ w) >= best - 1e-12


def test_optimal_weights_diagonal_se_bound():
    rng = np.random.default_rng(11)
    for _ in range(20):
        diag = rng.uniform(0.1, 5.0, size=3)
        sigma = np.diag(diag)
        c = optimal_weights(sigma)
        combined_var = float(c @ sigma @ c)
        assert np.sqrt(combined_var) <= np.sqrt(diag.min()) + 1e-12


def test_optimal_weights_degenerate_inputs():
    # indefinite matrix that stays indefinite after the ridge: equal weights
    with pytest.warns(RuntimeWarning, match="equal weights"):
        got = optimal_weights(np.diag([1.0, -0.5, 0.1]))
    assert_allclose(got, np.full(3, 1 / 3), atol=0)
    with pytest.raises(SingularSigma):
        optimal_weights(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(SingularSigma):
        optimal_weights(-np.eye(3))
    with pytest.raises(ValueError):
        optimal_weights(np.ones((2, 3)))
    # rank-deficient PSD: one ridge pass is enough to solve
    sigma = np.ones((3, 3)) + np.diag([1.0, 0.0, 0.0])
    c = optimal_weights(sigma)
    assert abs(c.sum() - 1.0) < 1e-14


def test_combine_needs_two_types(ds_one_type):
    stack = fit_per_type(ds_one_type, v=1.5, h=0.8, opts=TIGHT)
    assert stack.fitted == (1,)
    with pytest.raises(DataError, match="at least 2"):
        combine(stack, 0)
    with pytest.raises(ValueError, match="component"):
        fit = stack.fits[1]
        full = TypeStack(ds=ds_one_type, v=1.5, h=0.8, fits={1: fit, 2: fit})
        combine(full, 5)


def test_fit_weighted_curve_on_duplicated_types():
    ds = duplicated_type_dataset(seed=6, n=60)
    h = 0.6
    grid = default_grid(ds, 1.5 * h, size=9)
    wc = fit_weighted_curve(ds, grid, h, opts=FitOptions(min_effective_events=3.0))
    assert wc.type_h == pytest.approx(1.5 * h)
    assert wc.members == (1, 2)
    done = ~np.isnan(wc.beta[:, 0])
    assert done.any()
    assert np.all(wc.n_types[done] == 2)
    # identical types: the combination equals the per-type estimate
    per_type = wc.curves[1].beta
    assert_allclose(wc.beta[done], per_type[done], rtol=1e-9, atol=1e-12)
    assert np.all(np.isfinite(wc.se_beta[done]))
    sums = np.nansum(wc.weights[done], axis=2)
    assert_allclose(sums, np.ones_like(sums), atol=1e-12)


def test_fit_weighted_curve_skips_sparse_types():
    base = make_clustered(seed=12, n=40, J=1, p=1)
    mv = base.member(1)
    # second type: almost no events anywhere on the grid
    time2 = np.full_like(mv.time, 0.05)
    status2 = np.zeros_like(mv.status, dtype=int)
    status2[:2] = 1
    ds = Dataset.from_arrays(
        time=np.stack([mv.time, time2], axis=1),
        status=np.stack([mv.status.astype(int), status2], axis=1),
        v=np.stack([mv.v, mv.v], axis=1),
        z=np.stack([mv.z, mv.z], axis=1),
    )
    grid = np.linspace(0.8, 2.2, 7)
    wc = fit_weighted_curve(
        ds, grid, 0.4, opts=FitOptions(min_effective_events=2.0)
    )
    assert np.all(np.isnan(wc.beta))
    assert len(wc.skipped) == grid.shape[0]
    assert all("of 2 failure types" in reason for _, reason in wc.skipped)
    assert any("1 of 2" in reason for _, reason in wc.skipped)
