import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gp_kernels.kernels import (
    KernelError,
    SingularKernelError,
    StationaryKernelParams,
    diagonal_posterior,
    factorize,
    gibbs_kernel,
    gibbs_matrix,
    gp_interpolate,
    gram,
    gram_eigenvalues,
    kernel_g,
    kernel_h,
    stationary_kernel,
    stationary_matrix,
    with_length_scales,
)
from layouts.layouts import expand_square, square_grid

DEFAULT_XI = StationaryKernelParams(1 / 3, 3.0)


def test_kernel_g_values():
    assert kernel_g([0.2, 0.4], [0.2, 0.4], DEFAULT_XI) == pytest.approx(1 / 3)
    assert kernel_g([0.0, 0.0], [1.0, 0.0], DEFAULT_XI) == pytest.approx(0.28219, abs=1e-5)
    params = StationaryKernelParams(2.0, 0.5)
    # ‖Δ‖² = 2·l → ν·e⁻¹
    assert kernel_g([0.0], [1.0], params) == pytest.approx(2.0 * math.exp(-1))


def test_kernel_g_squared_lengthscale_flag():
    params = StationaryKernelParams(1.0, 3.0, squared_lengthscale=True)
    assert kernel_g([0.0, 0.0], [1.0, 0.0], params) == pytest.approx(math.exp(-1 / 18))


def test_kernel_g_dimension_mismatch():
    with pytest.raises(KernelError):
        kernel_g([0.0, 0.0], [0.0, 0.0, 0.0], DEFAULT_XI)


@pytest.mark.parametrize("variance, length", [(0.0, 1.0), (1.0, -1.0), (float("inf"), 1.0)])
def test_params_must_be_positive_and_finite(variance, length):
    with pytest.raises(KernelError):
        StationaryKernelParams(variance, length)


def test_kernel_h_values():
    assert kernel_h([0.3, 0.1], [0.3, 0.1], 1.0, 2.0) == pytest.approx(0.8)
    assert kernel_h([0.0, 0.0], [1.0, 1.0], 1.0, 1.0) == pytest.approx(math.exp(-1))
    with pytest.raises(KernelError):
        kernel_h([0.0], [0.0], 0.0, 1.0)


def test_stationary_reduction_of_gibbs_kernel():
    rng = np.random.default_rng(0)
    points = rng.uniform(-1, 1, size=(20, 3))
    length = 0.7
    stationary = np.exp(-((points[:, None, :] - points[None, :, :]) ** 2).sum(-1) / (2 * length ** 2))
    result = gibbs_matrix(points, points, np.full(20, length), np.full(20, length))
    np.testing.assert_allclose(result, stationary, atol=1e-15, rtol=0)


_point = arrays(np.float64, 2, elements=st.floats(-1, 1))
_length = st.floats(0.05, 5.0)


@settings(max_examples=300)
@given(_point, _point, _length, _length)
def test_kernels_are_symmetric(a, b, l_a, l_b):
    assert kernel_g(a, b, DEFAULT_XI) == kernel_g(b, a, DEFAULT_XI)
    assert abs(kernel_h(a, b, l_a, l_b) - kernel_h(b, a, l_b, l_a)) <= 1e-15


def test_vectorized_matrices_match_scalar_kernels():
    rng = np.random.default_rng(1)
    a = rng.uniform(-1, 1, size=(6, 2))
    lengths = np.exp(rng.normal(size=6))
    g = stationary_matrix(a, a, DEFAULT_XI)
    h = gibbs_matrix(a, a, lengths, lengths)
    for i in range(6):
        for j in range(6):
            assert g[i, j] == pytest.approx(kernel_g(a[i], a[j], DEFAULT_XI), rel=1e-12)
            assert h[i, j] == pytest.approx(kernel_h(a[i], a[j], lengths[i], lengths[j]), rel=1e-12)


def test_gibbs_gram_is_psd_before_jitter():
    rng = np.random.default_rng(2)
    for _ in range(30):
        k = int(rng.integers(2, 51))
        dims = int(rng.integers(1, 4))
        points = rng.uniform(-1, 1, size=(k, dims))
        lengths = np.exp(rng.uniform(-2, 1.5, size=k))
        eigenvalues = np.linalg.eigvalsh(gibbs_matrix(points, points, lengths, lengths))
        assert eigenvalues.min() >= -1e-8


def test_gram_single_point():
    result = gram(np.array([[0.5, 0.5]]), stationary_kernel(DEFAULT_XI))
    assert result.matrix.shape == (1, 1)
    assert result.matrix[0, 0] == pytest.approx(1 / 3)


def test_gram_identical_points_engages_jitter():
    points = with_length_scales(np.array([[0.1, 0.2], [0.1, 0.2]]), np.zeros(2))
    result = gram(points, gibbs_kernel())
    np.testing.assert_allclose(result.matrix, np.ones((2, 2)))
    assert result.jitter > 0
    assert result.jitter <= 1e-4


def test_gram_default_grid_positive_after_jitter():
    result = gram(square_grid(5), stationary_kernel(DEFAULT_XI))
    assert gram_eigenvalues(result).min() > 0
    assert result.jitter <= 1e-4 * (1 / 3)


def test_factorize_rejects_singular_and_asymmetric():
    with pytest.raises(SingularKernelError):
        factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(KernelError):
        factorize(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_solve_and_logdet_agree_with_dense_algebra():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 5))
    matrix = a @ a.T + 5 * np.eye(5)
    result = factorize(matrix)
    dense = matrix + result.jitter * np.eye(5)
    rhs = rng.normal(size=5)
    np.testing.assert_allclose(result.solve(rhs), np.linalg.solve(dense, rhs), rtol=1e-10)
    assert result.logdet() == pytest.approx(np.linalg.slogdet(dense)[1], rel=1e-10)


def test_gp_interpolate_reproduces_training_values():
    nodes = square_grid(3)
    values = np.arange(9, dtype=float)
    kernel = stationary_kernel(StationaryKernelParams(1.0, 0.2))
    np.testing.assert_allclose(gp_interpolate(nodes, values, kernel, nodes), values, atol=1e-6)


def test_gp_interpolate_constant_over_expansion():
    coarse = square_grid(5)
    fine, _ = expand_square(coarse)
    kernel = stationary_kernel(StationaryKernelParams(1.0, 2.0))
    result = gp_interpolate(coarse, np.full(25, 3.5), kernel, fine)
    np.testing.assert_allclose(result, 3.5, atol=1e-3)


def test_gp_interpolate_single_point_closed_form():
    params = StationaryKernelParams(1.0, 1.0)
    # exp(−d²/2) = 0.5
    d = math.sqrt(2 * math.log(2))
    result = gp_interpolate(np.array([[0.0]]), np.array([2.0]), stationary_kernel(params), np.array([[d]]))
    assert result[0] == pytest.approx(1.0, rel=1e-8)


def test_gp_interpolate_matrix_values_and_gibbs_kernel():
    coarse = square_grid(3)
    r = np.linspace(-0.5, 0.5, 9)
    train = with_length_scales(coarse, r)
    values = np.column_stack([np.arange(9.0), -np.arange(9.0)])
    result = gp_interpolate(train, values, gibbs_kernel(), train)
    np.testing.assert_allclose(result, values, atol=1e-6)


def test_gp_interpolate_size_mismatch():
    with pytest.raises(KernelError):
        gp_interpolate(square_grid(2), np.ones(3), stationary_kernel(DEFAULT_XI), square_grid(2))


# ---------------- posterior con precisión diagonal ----------------

def test_diagonal_posterior_matches_dense_formula():
    rng = np.random.default_rng(11)
    coords = square_grid(3).coords
    prior = factorize(stationary_matrix(coords, coords, StationaryKernelParams(1.0, 0.5)))
    diag = rng.uniform(0.1, 2.0, size=9)
    linear = rng.normal(size=9)
    posterior = diagonal_posterior(prior, diag, linear)
    expected = np.linalg.inv(np.diag(diag) + np.linalg.inv(prior.jittered))
    np.testing.assert_allclose(posterior.covariance(), expected, atol=1e-9)
    np.testing.assert_allclose(posterior.mean, expected @ linear, atol=1e-9)
    assert posterior.mean.shape == (9,)

    draws = posterior.sample(rng, 20_000)
    np.testing.assert_allclose(draws.mean(axis=1), expected @ linear, atol=0.05)
    np.testing.assert_allclose(np.cov(draws), expected, atol=0.05)


def test_diagonal_posterior_with_zero_precision_is_the_prior():
    coords = square_grid(2).coords
    prior = factorize(stationary_matrix(coords, coords, DEFAULT_XI))
    posterior = diagonal_posterior(prior, np.zeros(4), np.zeros((4, 2)))
    np.testing.assert_allclose(posterior.covariance(), prior.jittered, atol=1e-12)
    assert posterior.mean.shape == (4, 2)


def test_diagonal_posterior_on_ill_conditioned_gibbs_gram():
    fine, _ = expand_square(square_grid(5))
    ones = np.ones(fine.n_nodes)
    prior = factorize(gibbs_matrix(fine.coords, fine.coords, ones, ones), label="C_h")
    rng = np.random.default_rng(12)
    diag = np.full(fine.n_nodes, 50.0)
    linear = rng.normal(size=(fine.n_nodes, 3))
    posterior = diagonal_posterior(prior, diag, linear, label="H")
    assert np.all(np.isfinite(posterior.mean))
    sigma = posterior.covariance()
    assert np.array_equal(sigma, sigma.T)
    c = prior.jittered
    target = c @ linear
    # (Λ + C⁻¹)μ = b  ⇔  CΛμ + μ = Cb
    np.testing.assert_allclose(c @ (diag[:, None] * posterior.mean) + posterior.mean, target,
                               atol=1e-6 * np.abs(target).max())
    assert np.all(np.isfinite(posterior.sample(rng, 3)))


def test_diagonal_posterior_rejects_bad_precisions():
    coords = square_grid(2).coords
    prior = factorize(stationary_matrix(coords, coords, DEFAULT_XI))
    with pytest.raises(KernelError):
        diagonal_posterior(prior, np.ones(3), np.zeros(4))
    with pytest.raises(KernelError):
        diagonal_posterior(prior, np.array([1.0, -1.0, 1.0, 1.0]), np.zeros(4))
