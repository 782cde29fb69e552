import numpy as np
import pytest

from supopt.regtv import (GridShape, SmoothedTVParams, dense_grad_matrix,
                          grad_adjoint, grad_apply, lipschitz_bound,
                          perturbation_norm_bound, prox_tv, prox_tv_with_info,
                          tv_smooth, tv_smooth_grad, tv_value)

SHAPE = GridShape(6, 7)
TVP = SmoothedTVParams(tau=0.01)


def test_grid_shape_validation():
    with pytest.raises(ValueError):
        GridShape(1, 5)
    assert GridShape(3, 4).n == 12


def test_params_validation():
    with pytest.raises(ValueError):
        SmoothedTVParams(tau=0.0)
    with pytest.raises(ValueError):
        SmoothedTVParams(tau=0.01, lam=-1.0)


def test_grad_matches_dense_matrix():
    rng = np.random.default_rng(0)
    D = dense_grad_matrix(SHAPE)
    x = rng.standard_normal(SHAPE.n)
    y = rng.standard_normal(2 * SHAPE.n)
    assert np.allclose(grad_apply(SHAPE, x), D @ x)
    assert np.allclose(grad_adjoint(SHAPE, y), D.T @ y)


def test_grad_adjoint_inner_product_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(SHAPE.n)
    y = rng.standard_normal(2 * SHAPE.n)
    assert float(grad_apply(SHAPE, x) @ y) == pytest.approx(
        float(x @ grad_adjoint(SHAPE, y)), rel=1e-12)


def test_constant_image_has_zero_tv():
    x = np.full(SHAPE.n, 3.7)
    assert tv_value(SHAPE, x) == 0.0
    assert tv_smooth(SHAPE, TVP, x) == pytest.approx(2 * SHAPE.n * TVP.tau)
    assert np.allclose(tv_smooth_grad(SHAPE, TVP, x), 0.0)


def test_smoothing_bracket():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(SHAPE.n)
    r = tv_value(SHAPE, x)
    rs = tv_smooth(SHAPE, TVP, x)
    assert r <= rs <= r + 2 * SHAPE.n * TVP.tau


def test_gradient_by_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(SHAPE.n)
    g = tv_smooth_grad(SHAPE, TVP, x)
    h = 1e-6
    for i in rng.choice(SHAPE.n, size=8, replace=False):
        e = np.zeros(SHAPE.n)
        e[i] = h
        fd = (tv_smooth(SHAPE, TVP, x + e) - tv_smooth(SHAPE, TVP, x - e)) \
            / (2 * h)
        assert g[i] == pytest.approx(fd, abs=1e-5)


def test_lipschitz_bounds():
    loose = lipschitz_bound(TVP)
    tight = lipschitz_bound(TVP, shape=SHAPE, tight=True)
    assert loose == pytest.approx(8.0 / TVP.tau)
    D = dense_grad_matrix(SHAPE)
    dense = np.linalg.norm(D, 2) ** 2 / TVP.tau
    assert tight == pytest.approx(dense, rel=1e-6)
    assert tight <= loose + 1e-9


def test_hessian_norm_below_bound():
    # analytic Hessian D^T diag(tau^2/(tau^2+d^2)^{3/2}) D
    rng = np.random.default_rng(4)
    D = dense_grad_matrix(SHAPE)
    bound = lipschitz_bound(TVP)
    for _ in range(5):
        x = rng.standard_normal(SHAPE.n)
        d = D @ x
        wts = TVP.tau ** 2 / (TVP.tau ** 2 + d ** 2) ** 1.5
        H = D.T @ (wts[:, None] * D)
        assert np.linalg.norm(H, 2) <= bound + 1e-9


def test_perturbation_norm_bound_equals_row_norm_sum():
    D = dense_grad_matrix(SHAPE)
    row_norms = np.linalg.norm(D, axis=1).sum()
    assert perturbation_norm_bound(SHAPE) == pytest.approx(row_norms)


def _prox_oracle(shape, params, x, beta, nonneg, steps=200000):
    """Projected gradient descent on the prox objective (slow oracle)."""
    L = 8.0 / params.tau + 1.0 / beta
    z = np.maximum(x, 0.0) if nonneg else x.copy()
    for _ in range(steps):
        g = tv_smooth_grad(shape, params, z) + (z - x) / beta
        z_new = z - g / L
        if nonneg:
            z_new = np.maximum(z_new, 0.0)
        if np.max(np.abs(z_new - z)) * L < 1e-11:
            return z_new
        z = z_new
    return z


def test_prox_matches_projected_gradient_oracle():
    shape = GridShape(3, 3)
    params = SmoothedTVParams(tau=0.05)
    rng = np.random.default_rng(5)
    x = rng.standard_normal(shape.n)
    for nonneg in (False, True):
        z = prox_tv(shape, params, x, 0.1, nonneg=nonneg, tol=1e-9,
                    max_iter=2000)
        oracle = _prox_oracle(shape, params, x, 0.1, nonneg)
        assert np.max(np.abs(z - oracle)) < 1e-6


def test_prox_stationary_point_returned_unchanged():
    x = np.full(SHAPE.n, 2.0)  # constant image: gradient of R_tau is zero
    z = prox_tv(SHAPE, TVP, x, 0.01)
    assert np.array_equal(z, x)


def test_prox_never_increases_objective():
    rng = np.random.default_rng(6)
    for _ in range(5):
        x = rng.standard_normal(SHAPE.n)
        beta = 10 ** rng.uniform(-4, -1)
        z = prox_tv(SHAPE, TVP, x, beta)
        d = z - x
        obj_z = tv_smooth(SHAPE, TVP, z) + 0.5 / beta * float(d @ d)
        assert obj_z <= tv_smooth(SHAPE, TVP, x) + 1e-12


def test_prox_nonneg_feasible_output():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(SHAPE.n)
    z = prox_tv(SHAPE, TVP, x, 0.05, nonneg=True)
    assert np.min(z) >= 0.0


def test_prox_info_reports_iterations():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(SHAPE.n)
    z, nit, nfev, warn = prox_tv_with_info(SHAPE, TVP, x, 0.05)
    assert nit >= 1 and nfev >= nit
    assert not warn
    with pytest.raises(ValueError):
        prox_tv(SHAPE, TVP, x, 0.0)
