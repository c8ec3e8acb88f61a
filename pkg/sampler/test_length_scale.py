import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gp_kernels.kernels import StationaryKernelParams, factorize, gibbs_matrix, stationary_matrix
from layouts.layouts import cone_layout, square_grid
from sampler.exceptions import AscentError
from sampler.length_scale import (
    FlooredPrecision,
    LengthScaleTarget,
    acceptance_probability,
    fd_gradient,
    fd_hessian,
    laplace_metropolis_step,
    log_target_r,
    newton_ascent,
)
from sampler.state import Priors

PRIORS = Priors.default_for(3)
GRID = square_grid(3).coords


def _dense_target(r, H, coords, priors):
    """s(r) evaluada con inversas y determinantes densos, con el mismo jitter que la factorización."""
    lengths = np.exp(r)
    c_h = factorize(gibbs_matrix(coords, coords, lengths, lengths))
    c_r = factorize(stationary_matrix(coords, coords, priors.xi_r))
    c_h_dense = c_h.matrix + c_h.jitter * np.eye(len(r))
    c_r_dense = c_r.matrix + c_r.jitter * np.eye(len(r))
    _, logdet = np.linalg.slogdet(c_h_dense)
    quadratic = np.trace(H.T @ np.linalg.inv(c_h_dense) @ H)
    return -0.5 * H.shape[1] * logdet - 0.5 * quadratic - 0.5 * r @ np.linalg.inv(c_r_dense) @ r


def test_target_with_zero_H():
    r = np.linspace(-0.3, 0.3, 9)
    H = np.zeros((9, 3))
    expected = _dense_target(r, H, GRID, PRIORS)
    assert log_target_r(r, H, PRIORS, GRID) == pytest.approx(expected, rel=1e-9)


def test_target_matches_dense_oracle():
    rng = np.random.default_rng(0)
    H = rng.normal(size=(9, 3))
    for r in (np.zeros(9), rng.normal(scale=0.3, size=9)):
        assert LengthScaleTarget(GRID, H, PRIORS)(r) == pytest.approx(_dense_target(r, H, GRID, PRIORS), rel=1e-8)


def test_target_shift_identity():
    rng = np.random.default_rng(1)
    H = rng.normal(size=(9, 2))
    r = rng.normal(scale=0.2, size=9)
    c = 0.7
    lengths = np.exp(r)
    c_h = factorize(gibbs_matrix(GRID, GRID, lengths, lengths))
    ones = np.ones(9)
    # s(H + c·1) − s(H) = −½·Σ_d (2c·1ᵀC⁻¹h_d + c²·1ᵀC⁻¹1)
    expected = -0.5 * sum(2 * c * ones @ c_h.solve(H[:, d]) + c ** 2 * ones @ c_h.solve(ones) for d in range(2))
    target = LengthScaleTarget(GRID, H, PRIORS)
    shifted = LengthScaleTarget(GRID, H + c, PRIORS)
    assert shifted(r) - target(r) == pytest.approx(expected, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_analytic_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(9, 3))
    r = rng.normal(scale=0.3, size=9)
    target = LengthScaleTarget(GRID, H, PRIORS)
    analytic = target.gradient(r)
    numeric = fd_gradient(target, r)
    assert np.linalg.norm(analytic - numeric) <= 1e-5 * max(np.linalg.norm(numeric), 1.0)


def test_gradient_on_cone_layout_with_three_latent_dims():
    coords = cone_layout([1, 4, 6]).coords
    rng = np.random.default_rng(2)
    H = rng.normal(size=(len(coords), 2))
    r = rng.normal(scale=0.2, size=len(coords))
    target = LengthScaleTarget(coords, H, PRIORS)
    numeric = fd_gradient(target, r)
    assert np.linalg.norm(target.gradient(r) - numeric) <= 1e-5 * max(np.linalg.norm(numeric), 1.0)


def test_safe_target_outside_bounds():
    target = LengthScaleTarget(GRID, np.zeros((9, 1)), PRIORS)
    r = np.zeros(9)
    r[0] = 51.0
    assert target.safe(r) == -math.inf


def test_newton_ascent_increases_target():
    rng = np.random.default_rng(3)
    H = rng.normal(size=(9, 3))
    target = LengthScaleTarget(GRID, H, PRIORS)
    r0 = rng.normal(scale=0.3, size=9)
    r_hat, value = newton_ascent(r0, target.safe, target.safe_gradient)
    assert value > target(r0)
    assert value == pytest.approx(target(r_hat))
    assert np.all(np.abs(r_hat) <= 50.0)


def test_newton_ascent_rejects_invalid_start():
    with pytest.raises(AscentError):
        newton_ascent(np.zeros(2), lambda r: -math.inf, lambda r: np.zeros(2))


def test_newton_finds_quadratic_maximum():
    mean = np.array([1.0, -2.0])
    precision = np.array([[2.0, 0.5], [0.5, 1.0]])
    r_hat, value = newton_ascent(
        np.zeros(2),
        lambda r: -0.5 * (r - mean) @ precision @ (r - mean),
        lambda r: -precision @ (r - mean),
    )
    np.testing.assert_allclose(r_hat, mean, atol=1e-6)
    assert value == pytest.approx(0.0, abs=1e-10)


def test_fd_hessian_of_quadratic():
    precision = np.array([[3.0, 1.0], [1.0, 2.0]])
    hessian = fd_hessian(lambda r: -precision @ r, np.array([0.4, -0.1]))
    np.testing.assert_allclose(hessian, -precision, atol=1e-8)


def test_floored_precision():
    floored = FlooredPrecision.from_hessian(np.array([[1.0, 0.0], [0.0, -4.0]]))
    assert floored.eigenvalues.min() == pytest.approx(1e-6)
    assert floored.eigenvalues.max() == pytest.approx(4.0)
    with pytest.raises(AscentError):
        FlooredPrecision.from_hessian(np.array([[np.nan]]))


def test_acceptance_probability_equal_densities():
    assert acceptance_probability(-3.0, -3.0, -1.2, -1.2) == 1.0
    assert acceptance_probability(-math.inf, -3.0, 0.0, 0.0) == 0.0
    assert acceptance_probability(-4.0, -3.0, 0.0, 0.0) == pytest.approx(math.exp(-1.0))


@pytest.mark.parametrize("dim", [1, 4])
def test_metropolis_recovers_gaussian_target(dim):
    rng = np.random.default_rng(10 + dim)
    mean = np.array([1.0, -2.0, 0.5, 3.0])[:dim]
    a = rng.normal(size=(dim, dim))
    covariance = a @ a.T / dim + 0.5 * np.eye(dim)
    precision = np.linalg.inv(covariance)

    def log_target(r):
        return float(-0.5 * (r - mean) @ precision @ (r - mean))

    def grad(r):
        return -precision @ (r - mean)

    r = np.zeros(dim)
    draws, accepted = [], 0
    for _ in range(20_000):
        r, was_accepted = laplace_metropolis_step(r, log_target, grad, rng)
        accepted += was_accepted
        draws.append(r)
    draws = np.array(draws)

    scale = np.sqrt(np.diag(covariance))
    assert np.all(np.abs(draws.mean(axis=0) - mean) <= 0.05 * np.maximum(1.0, np.abs(mean)))
    empirical = np.atleast_2d(np.cov(draws.T))
    assert np.all(np.abs(empirical - covariance) <= 0.05 * np.outer(scale, scale))
    # propuesta exacta para objetivos gaussianos
    assert accepted / 20_000 > 0.99


def test_metropolis_keeps_r_when_ascent_fails():
    rng = np.random.default_rng(4)
    r = np.array([0.2, -0.1])
    new_r, accepted = laplace_metropolis_step(r, lambda x: -math.inf, lambda x: np.zeros(2), rng)
    assert not accepted
    assert np.array_equal(new_r, r)


def test_stationary_prior_gram_reused():
    prior_gram = factorize(stationary_matrix(GRID, GRID, StationaryKernelParams(1 / 3, 3.0)))
    target = LengthScaleTarget(GRID, np.zeros((9, 1)), PRIORS, prior_gram=prior_gram)
    assert target.prior_gram is prior_gram
