import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gammaln, logsumexp
from sklearn.decomposition import PCA

from gp_kernels.kernels import (
    DiagonalPosterior,
    GramMatrix,
    diagonal_posterior,
    factorize,
    gibbs_matrix,
    stationary_matrix,
)

from .exceptions import AscentError, SamplerError
from .length_scale import LengthScaleTarget, laplace_metropolis_step, newton_ascent
from .state import LatentState, Priors
from .truncated_normal import sample_truncated_normal, truncated_normal_mode

logger = logging.getLogger(__name__)

G_FLOOR = 1e-6
MODE_SWEEPS = 500
MODE_TOLERANCE = 1e-10


def _coords(nodes) -> np.ndarray:
    return np.atleast_2d(np.asarray(getattr(nodes, "coords", nodes), dtype=float))


class LDLVSampler:
    """
    Condicionales completas del modelo x_n ~ N(g_k·h_k, β⁻¹I) con priors GP sobre g, H y r.

    Las matrices de Gram de los priors estacionarios (C_g, C_r) se factorizan una vez por
    conjunto de nodos; C_h se reconstruye desde r en cada actualización.
    """

    def __init__(self, X: np.ndarray, nodes, priors: Priors, analytic_gradient: bool = True):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        if not np.all(np.isfinite(self.X)):
            raise SamplerError("La matriz de características contiene valores no finitos.")
        self.coords = _coords(nodes)
        self.priors = priors
        self.analytic_gradient = analytic_gradient
        self.prior_gram_g = factorize(stationary_matrix(self.coords, self.coords, priors.xi_g), label="C_g")
        self.prior_gram_r = factorize(stationary_matrix(self.coords, self.coords, priors.xi_r), label="C_r")
        self.prior_precision_g = self.prior_gram_g.inverse()

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def _check(self, state: LatentState) -> None:
        if state.n_nodes != self.n_nodes or state.n_elements != self.n_elements:
            raise SamplerError(
                f"Estado K={state.n_nodes}, N={state.n_elements} incompatible con K={self.n_nodes}, N={self.n_elements}"
            )
        if state.H.shape[1] != self.n_features:
            raise SamplerError(f"H tiene {state.H.shape[1]} columnas, se esperaban D={self.n_features}")

    # ---------------- auxiliares ----------------

    def squared_distances(self, state: LatentState) -> np.ndarray:
        """Matriz K×N de ‖x_n − y_k‖²."""
        return cdist(state.Y, self.X, "sqeuclidean")

    def log_responsibilities(self, state: LatentState) -> np.ndarray:
        logits = -0.5 * state.beta * self.squared_distances(state)
        return logits - logsumexp(logits, axis=0, keepdims=True)

    def responsibilities(self, state: LatentState) -> np.ndarray:
        """γ_k(x_n) como matriz K×N; cada columna suma 1."""
        return np.exp(self.log_responsibilities(state))

    def assigned_sums(self, state: LatentState) -> np.ndarray:
        """Matriz K×D con Σ_n z_kn·x_n."""
        sums = np.zeros((self.n_nodes, self.n_features))
        np.add.at(sums, state.labels, self.X)
        return sums

    def residual_sum(self, state: LatentState) -> float:
        return float(np.sum((self.X - state.Y[state.labels]) ** 2))

    def kernel_gram_h(self, r: np.ndarray) -> GramMatrix:
        lengths = np.exp(r)
        return factorize(gibbs_matrix(self.coords, self.coords, lengths, lengths), label="C_h")

    def length_scale_target(self, H: np.ndarray) -> LengthScaleTarget:
        return LengthScaleTarget(self.coords, H, self.priors, prior_gram=self.prior_gram_r)

    # ---------------- condicionales ----------------

    def beta_posterior(self, state: LatentState) -> Tuple[float, float]:
        """(d_β, s_β) = (d_β0 + ND/2, s_β0 + ½·Σ‖x_n − y_k(n)‖²)."""
        shape = self.priors.beta_shape + 0.5 * self.n_elements * self.n_features
        rate = self.priors.beta_rate + 0.5 * self.residual_sum(state)
        return shape, rate

    def g_conditional(self, state: LatentState) -> Tuple[np.ndarray, np.ndarray]:
        """Precisión P = β·diag(N_k‖h_k‖²) + C_g⁻¹ y media μ = P⁻¹·β·b con b_k = h_kᵀ Σ_n z_kn x_n."""
        diag = state.beta * state.counts * np.sum(state.H ** 2, axis=1)
        precision = np.diag(diag) + self.prior_precision_g
        linear = state.beta * np.sum(state.H * self.assigned_sums(state), axis=1)
        mean = diagonal_posterior(self.prior_gram_g, diag, linear, label="g").mean
        return precision, mean

    def H_conditional(self, state: LatentState) -> Tuple[DiagonalPosterior, np.ndarray]:
        """Posterior de H con precisión β·diag(N_k g_k²) + C_h⁻¹ y media K×D M = Σ_h·β·Λ_g·Z·X."""
        c_h = self.kernel_gram_h(state.r)
        diag = state.beta * state.counts * state.g ** 2
        posterior = diagonal_posterior(c_h, diag, state.beta * state.g[:, None] * self.assigned_sums(state), label="H")
        return posterior, posterior.mean

    def sample_Z(self, state: LatentState, rng: np.random.Generator) -> LatentState:
        resp = self.responsibilities(state)
        cumulative = np.cumsum(resp, axis=0)
        u = rng.random(self.n_elements) * cumulative[-1]
        labels = np.minimum((cumulative <= u).sum(axis=0), self.n_nodes - 1)
        return LatentState(labels=labels, beta=state.beta, g=state.g, H=state.H, r=state.r)

    def sample_beta(self, state: LatentState, rng: np.random.Generator) -> LatentState:
        shape, rate = self.beta_posterior(state)
        beta = rng.gamma(shape, 1.0 / rate)
        return LatentState(labels=state.labels, beta=beta, g=state.g, H=state.H, r=state.r)

    def sample_g(self, state: LatentState, rng: np.random.Generator) -> LatentState:
        """Un barrido de Gibbs coordenada a coordenada sobre la normal truncada a g > 0."""
        precision, mean = self.g_conditional(state)
        g = state.g.copy()
        for k in range(self.n_nodes):
            p_kk = precision[k, k]
            coupling = precision[k] @ (g - mean) - p_kk * (g[k] - mean[k])
            conditional_mean = mean[k] - coupling / p_kk
            g[k] = sample_truncated_normal(conditional_mean, 1.0 / math.sqrt(p_kk), 0.0, rng)
        return LatentState(labels=state.labels, beta=state.beta, g=g, H=state.H, r=state.r)

    def sample_H(self, state: LatentState, rng: np.random.Generator) -> LatentState:
        """D columnas independientes N(μ_h,d, Σ_h) con una única factorización compartida."""
        posterior, _ = self.H_conditional(state)
        H = posterior.sample(rng, self.n_features)
        return LatentState(labels=state.labels, beta=state.beta, g=state.g, H=H, r=state.r)

    def sample_r(self, state: LatentState, rng: np.random.Generator) -> Tuple[LatentState, bool]:
        target = self.length_scale_target(state.H)
        grad = target.safe_gradient if self.analytic_gradient else target.safe_fd_gradient
        r, accepted = laplace_metropolis_step(state.r, target.safe, grad, rng)
        return LatentState(labels=state.labels, beta=state.beta, g=state.g, H=state.H, r=r), accepted

    def step(self, state: LatentState, rng: np.random.Generator) -> Tuple[LatentState, bool]:
        """Un barrido completo en el orden Z, β, g, H, r."""
        self._check(state)
        state = self.sample_Z(state, rng)
        state = self.sample_beta(state, rng)
        state = self.sample_g(state, rng)
        state = self.sample_H(state, rng)
        return self.sample_r(state, rng)

    # ---------------- modas condicionales ----------------

    def beta_mode(self, state: LatentState) -> float:
        shape, rate = self.beta_posterior(state)
        return max((shape - 1.0) / rate, 1e-12)

    def g_mode(self, state: LatentState) -> np.ndarray:
        """Moda coordenada a coordenada de la normal truncada, con piso 1e-6, iterada hasta converger."""
        precision, mean = self.g_conditional(state)
        g = np.maximum(state.g.copy(), G_FLOOR)
        for _ in range(MODE_SWEEPS):
            previous = g.copy()
            for k in range(self.n_nodes):
                p_kk = precision[k, k]
                coupling = precision[k] @ (g - mean) - p_kk * (g[k] - mean[k])
                g[k] = truncated_normal_mode(mean[k] - coupling / p_kk, G_FLOOR)
            if np.max(np.abs(g - previous)) < MODE_TOLERANCE:
                break
        return g

    def H_mode(self, state: LatentState) -> np.ndarray:
        return self.H_conditional(state)[1]

    def r_mode(self, state: LatentState) -> np.ndarray:
        """Máximo local de s(r) por Newton desde el r actual; ante un fallo se conserva r."""
        target = self.length_scale_target(state.H)
        grad = target.safe_gradient if self.analytic_gradient else target.safe_fd_gradient
        try:
            r, _ = newton_ascent(state.r, target.safe, grad)
        except AscentError as exc:
            logger.debug(f"Ascenso de r fallido en el ajuste fino, se conserva r: {exc}")
            return state.r
        return r

    # ---------------- verosimilitudes ----------------

    def marginal_log_likelihood(self, state: LatentState) -> float:
        """Σ_n ln Σ_k (1/K)·N(x_n | y_k, β⁻¹I)."""
        logits = -0.5 * state.beta * self.squared_distances(state)
        normalizer = 0.5 * self.n_features * math.log(state.beta / (2.0 * math.pi)) - math.log(self.n_nodes)
        return float(np.sum(logsumexp(logits, axis=0)) + self.n_elements * normalizer)

    def complete_log_likelihood(self, state: LatentState) -> float:
        """ln p(X | Z, β, g, H)."""
        normalizer = 0.5 * self.n_features * math.log(state.beta / (2.0 * math.pi))
        return float(self.n_elements * normalizer - 0.5 * state.beta * self.residual_sum(state))

    def joint_log_density(self, state: LatentState) -> float:
        """ln p(X, θ): verosimilitud completa más los priors de Z, β, g, H y r."""
        d0, s0 = self.priors.beta_shape, self.priors.beta_rate
        log_beta = d0 * math.log(s0) - gammaln(d0) + (d0 - 1.0) * math.log(state.beta) - s0 * state.beta
        log_z = -self.n_elements * math.log(self.n_nodes)
        log_g = _gaussian_log_density(state.g[:, None], self.prior_gram_g)
        log_h = _gaussian_log_density(state.H, self.kernel_gram_h(state.r))
        log_r = _gaussian_log_density(state.r[:, None], self.prior_gram_r)
        return self.complete_log_likelihood(state) + log_z + log_beta + log_g + log_h + log_r


def _gaussian_log_density(columns: np.ndarray, gram: GramMatrix) -> float:
    """Σ_d ln N(v_d | 0, C) para las columnas v_d."""
    k, n_columns = columns.shape
    quadratic = float(np.sum(columns * gram.solve(columns)))
    return -0.5 * quadratic - 0.5 * n_columns * (gram.logdet() + k * math.log(2.0 * math.pi))


def initial_state(X: np.ndarray, nodes) -> LatentState:
    """
    θ⁰: nodos proyectados sobre las L primeras componentes principales de X, escaladas por su
    desviación estándar; g⁰ = 1, H⁰ = Y⁰, r⁰ = 0, Z⁰ al nodo más cercano y
    β⁰ = D / media de la distancia cuadrada al nodo más cercano.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    coords = _coords(nodes)
    n_elements, n_features = X.shape
    k, latent_dim = coords.shape
    mean = X.mean(axis=0)
    Y = np.tile(mean, (k, 1))
    n_components = min(latent_dim, n_elements - 1, n_features)
    if n_components >= 1:
        pca = PCA(n_components=n_components, svd_solver="full").fit(X)
        loadings = pca.components_ * np.sqrt(pca.explained_variance_)[:, None]
        Y = Y + coords[:, :n_components] @ loadings
    distances = cdist(X, Y, "sqeuclidean")
    labels = np.argmin(distances, axis=1)
    nearest = float(distances.min(axis=1).mean())
    beta = n_features / nearest if nearest > 1e-12 else 1.0
    return LatentState(labels=labels, beta=beta, g=np.ones(k), H=Y, r=np.zeros(k))


# Funciones de conveniencia sobre un muestreador temporal

def responsibilities(x_n: np.ndarray, state: LatentState) -> np.ndarray:
    """Vector γ(x_n) de longitud K."""
    x_n = np.asarray(x_n, dtype=float).reshape(1, -1)
    if not np.all(np.isfinite(x_n)):
        raise SamplerError("x_n contiene valores no finitos.")
    logits = -0.5 * state.beta * cdist(state.Y, x_n, "sqeuclidean")[:, 0]
    return np.exp(logits - logsumexp(logits))


def sample_Z(X, state: LatentState, rng: np.random.Generator, nodes, priors: Priors) -> np.ndarray:
    return LDLVSampler(X, nodes, priors).sample_Z(state, rng).labels


def sample_beta(X, state: LatentState, priors: Priors, rng: np.random.Generator, nodes) -> float:
    return LDLVSampler(X, nodes, priors).sample_beta(state, rng).beta


def sample_g(X, state: LatentState, priors: Priors, rng: np.random.Generator, nodes) -> np.ndarray:
    return LDLVSampler(X, nodes, priors).sample_g(state, rng).g


def sample_H(X, state: LatentState, priors: Priors, rng: np.random.Generator, nodes) -> np.ndarray:
    return LDLVSampler(X, nodes, priors).sample_H(state, rng).H


def sample_r(X, state: LatentState, priors: Priors, nodes, rng: np.random.Generator) -> Tuple[np.ndarray, bool]:
    new_state, accepted = LDLVSampler(X, nodes, priors).sample_r(state, rng)
    return new_state.r, accepted
