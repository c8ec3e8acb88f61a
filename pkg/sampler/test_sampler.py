import math

import numpy as np
import pytest
from scipy import stats

from gp_kernels.kernels import StationaryKernelParams, gibbs_matrix, stationary_matrix
from layouts.layouts import expand_square, square_grid
from sampler.exceptions import SamplerError
from sampler.sampler import LDLVSampler, initial_state, responsibilities
from sampler.state import ChainConfig, LatentState, Priors
from sampler.truncated_normal import sample_truncated_normal

# Nodos lejanos y ξ_g = (1, 0.1): las coordenadas de g quedan prácticamente independientes
FAR_NODES = np.array([[-1.0, 0.0], [1.0, 0.0]])
UNIT_PRIORS = Priors(
    xi_g=StationaryKernelParams(1.0, 0.1),
    xi_r=StationaryKernelParams(1.0, 0.1),
    beta_shape=1.0,
    beta_rate=1.0,
)


def _state(labels, beta, g, H, r=None):
    g = np.asarray(g, dtype=float)
    return LatentState(labels=np.asarray(labels), beta=beta, g=g, H=np.asarray(H, dtype=float),
                       r=np.zeros(len(g)) if r is None else r)


def _ks_against_grid(samples, grid, density):
    """Estadístico KS entre la muestra y la CDF de una densidad evaluada en una rejilla densa."""
    cdf = np.cumsum(density)
    cdf /= cdf[-1]
    empirical = np.searchsorted(np.sort(samples), grid, side="right") / len(samples)
    return float(np.max(np.abs(empirical - cdf)))


# ---------------- estado ----------------

def test_state_invariants():
    state = _state([0, 1, 1], 2.0, [1.0, 2.0], [[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(state.Z.sum(axis=0), np.ones(3))
    np.testing.assert_allclose(state.Y, [[1.0, 2.0], [6.0, 8.0]], atol=1e-12)
    assert state.counts.tolist() == [1.0, 2.0]
    with pytest.raises(SamplerError):
        _state([0], 1.0, [0.0], [[1.0]])
    with pytest.raises(SamplerError):
        _state([0], -1.0, [1.0], [[1.0]])
    with pytest.raises(SamplerError):
        _state([2], 1.0, [1.0], [[1.0]])


def test_chain_config_validation():
    with pytest.raises(SamplerError):
        ChainConfig(iterations=10, burn_in=10)
    with pytest.raises(SamplerError):
        ChainConfig(iterations=10, burn_in=2, stride=0)
    assert ChainConfig(iterations=10_000, burn_in=5_000, stride=5).recorded_iterations[:2] == [5001, 5006]
    assert len(ChainConfig(iterations=10_000, burn_in=5_000, stride=5).recorded_iterations) == 1000


def test_default_priors():
    priors = Priors.default_for(39)
    assert priors.xi_g.variance == pytest.approx(1 / 3) and priors.xi_g.length_scale == 3.0
    assert priors.beta_shape == 2.0 and priors.beta_rate == 78.0


# ---------------- responsabilidades y Z ----------------

def test_responsibilities_uniform_when_nodes_coincide():
    state = _state([0], 1.0, np.ones(4), np.ones((4, 2)))
    np.testing.assert_allclose(responsibilities([0.3, -0.2], state), 0.25)


def test_responsibilities_hand_values():
    state = _state([0], 2.0, [1.0, 1.0], [[1.0], [math.sqrt(2.0)]])
    gamma = responsibilities([0.0], state)
    np.testing.assert_allclose(gamma, [0.7311, 0.2689], atol=1e-4)
    assert abs(gamma.sum() - 1.0) < 1e-12


def test_responsibilities_sharp_limit():
    state = _state([0], 1e6, np.ones(3), [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert responsibilities([0.9, 0.1], state)[1] > 1 - 1e-6


def test_responsibilities_reject_non_finite():
    state = _state([0], 1.0, [1.0], [[0.0]])
    with pytest.raises(SamplerError):
        responsibilities([np.nan], state)


def test_sample_Z_degenerate_is_deterministic():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    nodes = np.array([[-1.0, -1.0], [1.0, 1.0]])
    sampler = LDLVSampler(X, nodes, UNIT_PRIORS)
    state = _state([1, 0], 1e8, [1.0, 1.0], [[0.0, 0.0], [1.0, 1.0]])
    assert sampler.sample_Z(state, np.random.default_rng(0)).labels.tolist() == [0, 1]


def test_sample_Z_uniform_frequencies():
    X = np.zeros((100_000, 1))
    nodes = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    sampler = LDLVSampler(X, nodes, UNIT_PRIORS)
    state = LatentState(labels=np.zeros(100_000, dtype=int), beta=1.0, g=np.ones(4), H=np.zeros((4, 1)), r=np.zeros(4))
    labels = sampler.sample_Z(state, np.random.default_rng(1)).labels
    counts = np.bincount(labels, minlength=4)
    assert stats.chisquare(counts).pvalue > 1e-3
    assert np.all(np.abs(counts / 100_000 - 0.25) < 3 * math.sqrt(0.25 * 0.75 / 100_000))


def test_sample_Z_fixed_seed_reproducible():
    rng_x = np.random.default_rng(2)
    X = rng_x.normal(size=(30, 3))
    nodes = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    sampler = LDLVSampler(X, nodes, UNIT_PRIORS)
    state = initial_state(X, nodes)
    a = sampler.sample_Z(state, np.random.default_rng(5)).labels
    b = sampler.sample_Z(state, np.random.default_rng(5)).labels
    assert np.array_equal(a, b)


# ---------------- β ----------------

def test_beta_posterior_parameters():
    single = LDLVSampler(np.array([[1.0]]), np.array([[0.0]]), UNIT_PRIORS)
    assert single.beta_posterior(_state([0], 1.0, [1.0], [[1.0]])) == pytest.approx((1.5, 1.0))

    X = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 0.0]])
    sampler = LDLVSampler(X, np.array([[0.0]]), UNIT_PRIORS)
    # residuo: 1 + 4 + 0 + 4 + 0 + 1 = 10
    state = _state([0, 0], 1.0, [1.0], [[0.0, 0.0, 1.0]])
    assert sampler.residual_sum(state) == pytest.approx(10.0)
    assert sampler.beta_posterior(state) == pytest.approx((4.0, 6.0))


def test_sample_beta_matches_gamma():
    priors = Priors(UNIT_PRIORS.xi_g, UNIT_PRIORS.xi_r, beta_shape=2.5, beta_rate=2.0)
    sampler = LDLVSampler(np.array([[1.0]]), np.array([[0.0]]), priors)
    state = _state([0], 1.0, [1.0], [[1.0]])
    rng = np.random.default_rng(3)
    draws = np.array([sampler.sample_beta(state, rng).beta for _ in range(20_000)])
    assert abs(draws.mean() - 1.5) < 3 * math.sqrt(3.0 / 4.0 / 20_000)
    assert stats.kstest(draws, stats.gamma(a=3.0, scale=0.5).cdf).statistic < 0.02


# ---------------- g ----------------

def test_g_conditional_scalar_conjugacy():
    priors = Priors(StationaryKernelParams(1.0, 1.0), StationaryKernelParams(1.0, 1.0), 1.0, 1.0)
    sampler = LDLVSampler(np.array([[2.0]]), np.array([[0.0, 0.0]]), priors)
    state = _state([0], 1.0, [1.0], [[1.0]])
    precision, mean = sampler.g_conditional(state)
    assert precision[0, 0] == pytest.approx(2.0)
    assert mean[0] == pytest.approx(1.0)

    rng = np.random.default_rng(4)
    draws = np.array([sampler.sample_g(state, rng).g[0] for _ in range(20_000)])
    assert np.all(draws > 0)
    std = math.sqrt(0.5)
    reference = stats.truncnorm(a=(0.0 - 1.0) / std, b=np.inf, loc=1.0, scale=std)
    assert stats.kstest(draws, reference.cdf).statistic < 0.02


def test_g_conditional_against_dense_grid():
    X = np.array([[1.5], [-0.5]])
    sampler = LDLVSampler(X, FAR_NODES, UNIT_PRIORS)
    state = _state([0, 1], 2.0, [1.0, 1.0], [[1.2], [-0.8]])
    rng = np.random.default_rng(5)
    draws = []
    current = state
    for _ in range(20_000):
        current = sampler.sample_g(current, rng)
        draws.append(current.g.copy())
    draws = np.array(draws)

    # densidad directa: verosimilitud de cada x_n con y = g_k·h_k por el prior N(0, C_g), g > 0
    c_g = stationary_matrix(FAR_NODES, FAR_NODES, UNIT_PRIORS.xi_g)
    precision_prior = np.linalg.inv(c_g)
    grid = np.linspace(1e-4, 5.0, 1500)
    g1, g2 = np.meshgrid(grid, grid, indexing="ij")
    y1, y2 = g1 * 1.2, g2 * -0.8
    log_lik = -0.5 * state.beta * ((1.5 - y1) ** 2 + (-0.5 - y2) ** 2)
    quad = precision_prior[0, 0] * g1 ** 2 + 2 * precision_prior[0, 1] * g1 * g2 + precision_prior[1, 1] * g2 ** 2
    density = np.exp(log_lik - 0.5 * quad)
    assert _ks_against_grid(draws[:, 0], grid, density.sum(axis=1)) < 0.02
    assert _ks_against_grid(draws[:, 1], grid, density.sum(axis=0)) < 0.02


def test_g_empty_node_reverts_to_prior_slice():
    X = np.array([[1.0], [2.0]])
    sampler = LDLVSampler(X, FAR_NODES, UNIT_PRIORS)
    state = _state([0, 0], 3.0, [1.0, 1.0], [[1.0], [5.0]])
    precision, mean = sampler.g_conditional(state)
    assert precision[1, 1] == pytest.approx(sampler.prior_precision_g[1, 1])
    assert abs(mean[1]) < 1e-6


def test_g_sampling_reproducible():
    X = np.random.default_rng(6).normal(size=(10, 2))
    nodes = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    sampler = LDLVSampler(X, nodes, Priors.default_for(2))
    state = initial_state(X, nodes)
    a = sampler.sample_g(state, np.random.default_rng(9)).g
    b = sampler.sample_g(state, np.random.default_rng(9)).g
    assert np.array_equal(a, b) and np.all(a > 0)


def test_truncated_normal_far_tail():
    rng = np.random.default_rng(7)
    draws = np.array([sample_truncated_normal(0.0, 1.0, 10.0, rng) for _ in range(5_000)])
    assert np.all(draws > 10.0)
    # media de N(0,1) | x > a ≈ a + 1/a en la cola
    assert draws.mean() == pytest.approx(10.0 + 1 / 10.0, abs=0.01)


# ---------------- H ----------------

def test_H_conditional_scalar_conjugacy():
    sampler = LDLVSampler(np.array([[3.0]]), np.array([[0.0, 0.0]]), UNIT_PRIORS)
    state = _state([0], 1.0, [1.0], [[0.0]])
    posterior, mean = sampler.H_conditional(state)
    assert mean[0, 0] == pytest.approx(1.5, rel=1e-8)
    assert posterior.covariance()[0, 0] == pytest.approx(0.5, rel=1e-8)


def test_H_against_dense_grid():
    X = np.array([[1.0], [-2.0]])
    sampler = LDLVSampler(X, FAR_NODES, UNIT_PRIORS)
    state = _state([0, 1], 1.5, [0.8, 1.3], [[0.0], [0.0]])
    rng = np.random.default_rng(8)
    draws = np.array([sampler.sample_H(state, rng).H[:, 0] for _ in range(20_000)])

    c_h = gibbs_matrix(FAR_NODES, FAR_NODES, np.ones(2), np.ones(2))
    precision_prior = np.linalg.inv(c_h)
    grid = np.linspace(-6.0, 6.0, 1500)
    h1, h2 = np.meshgrid(grid, grid, indexing="ij")
    log_lik = -0.5 * state.beta * ((1.0 - 0.8 * h1) ** 2 + (-2.0 - 1.3 * h2) ** 2)
    quad = precision_prior[0, 0] * h1 ** 2 + 2 * precision_prior[0, 1] * h1 * h2 + precision_prior[1, 1] * h2 ** 2
    density = np.exp(log_lik - 0.5 * quad)
    assert _ks_against_grid(draws[:, 0], grid, density.sum(axis=1)) < 0.02
    assert _ks_against_grid(draws[:, 1], grid, density.sum(axis=0)) < 0.02


def test_H_vanishing_beta_matches_prior():
    nodes = np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.5]])
    X = np.zeros((4, 1))
    sampler = LDLVSampler(X, nodes, UNIT_PRIORS)
    r = np.array([0.0, -0.3, 0.2])
    state = LatentState(labels=np.array([0, 1, 2, 0]), beta=1e-10, g=np.ones(3), H=np.zeros((3, 1)), r=r)
    rng = np.random.default_rng(10)
    draws = np.array([sampler.sample_H(state, rng).H[:, 0] for _ in range(10_000)])
    c_h = gibbs_matrix(nodes, nodes, np.exp(r), np.exp(r))
    error = np.linalg.norm(np.cov(draws.T) - c_h) / np.linalg.norm(c_h)
    assert error < 0.1


def test_H_sampling_reproducible():
    X = np.random.default_rng(11).normal(size=(8, 3))
    nodes = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    sampler = LDLVSampler(X, nodes, Priors.default_for(3))
    state = initial_state(X, nodes)
    assert np.array_equal(
        sampler.sample_H(state, np.random.default_rng(1)).H,
        sampler.sample_H(state, np.random.default_rng(1)).H,
    )


def test_sweeps_on_expanded_square_grid():
    fine, _ = expand_square(square_grid(5))
    X = np.random.default_rng(13).normal(size=(54, 39))
    sampler = LDLVSampler(X, fine.coords, Priors.default_for(39))
    state = initial_state(X, fine.coords)
    rng = np.random.default_rng(2)
    for _ in range(3):
        state, _ = sampler.step(state, rng)
    assert np.all(np.isfinite(state.H)) and np.all(state.g > 0)
    precision, mean = sampler.g_conditional(state)
    assert np.array_equal(precision, precision.T) and np.all(np.isfinite(mean))


# ---------------- inicialización, modas y verosimilitudes ----------------

def test_initial_state_properties():
    X = np.random.default_rng(12).normal(size=(20, 4))
    nodes = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    state = initial_state(X, nodes)
    assert np.array_equal(state.g, np.ones(4))
    assert np.array_equal(state.r, np.zeros(4))
    distances = ((X[:, None, :] - state.Y[None, :, :]) ** 2).sum(-1)
    assert np.array_equal(state.labels, distances.argmin(axis=1))
    assert state.beta == pytest.approx(4 / distances.min(axis=1).mean())


def test_initial_state_single_element():
    state = initial_state(np.array([[7.0]]), np.array([[0.0]]))
    assert state.Y[0, 0] == 7.0 and state.beta == 1.0


def test_modes_are_stationary_points():
    X = np.random.default_rng(13).normal(size=(12, 2))
    nodes = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    sampler = LDLVSampler(X, nodes, Priors.default_for(2))
    state = initial_state(X, nodes)
    shape, rate = sampler.beta_posterior(state)
    assert sampler.beta_mode(state) == pytest.approx((shape - 1) / rate)
    g = sampler.g_mode(state)
    assert np.all(g >= 1e-6)
    precision, mean = sampler.g_conditional(state)
    gradient = -precision @ (g - mean)
    # KKT: gradiente nulo en coordenadas libres, no positivo en las acotadas
    free = g > 1e-6
    tolerance = 1e-5 * np.abs(precision).max()
    np.testing.assert_allclose(gradient[free], 0.0, atol=tolerance)
    assert np.all(gradient[~free] <= tolerance)


def test_marginal_log_likelihood_matches_direct_sum():
    X = np.random.default_rng(14).normal(size=(6, 2))
    nodes = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    sampler = LDLVSampler(X, nodes, Priors.default_for(2))
    state = initial_state(X, nodes)
    density = np.zeros(6)
    for k in range(3):
        density += stats.multivariate_normal(state.Y[k], np.eye(2) / state.beta).pdf(X) / 3
    assert sampler.marginal_log_likelihood(state) == pytest.approx(np.log(density).sum(), rel=1e-10)
    assert np.isfinite(sampler.joint_log_density(state))
