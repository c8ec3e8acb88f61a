"""
Campo de log-longitudes de escala r: densidad s(r), gradiente analítico, ascenso de Newton
y paso de Metropolis–Hastings con propuesta de Laplace centrada en el máximo local.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from gp_kernels.kernels import GramMatrix, SingularKernelError, factorize, gibbs_matrix, stationary_matrix

from .exceptions import AscentError
from .state import R_BOUND, Priors

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-6
MAX_NEWTON_ITERATIONS = 20
MAX_STEP_HALVINGS = 30
FD_STEP = 1e-4

VectorFn = Callable[[np.ndarray], np.ndarray]
ScalarFn = Callable[[np.ndarray], float]


class LengthScaleTarget:
    """
    s(r) = −D/2·ln|C_h| − ½·Σ_d h_dᵀ C_h⁻¹ h_d − ½·rᵀ C_r⁻¹ r para un H fijo.

    C_r depende solo de los nodos y se factoriza una vez por objetivo (o se recibe ya factorizada).
    """

    def __init__(self, coords: np.ndarray, H: np.ndarray, priors: Priors, prior_gram: Optional[GramMatrix] = None):
        self.coords = np.atleast_2d(np.asarray(coords, dtype=float))
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        self.latent_dim = self.coords.shape[1]
        self.sq_dist = cdist(self.coords, self.coords, "sqeuclidean")
        self.prior_gram = prior_gram or factorize(stationary_matrix(self.coords, self.coords, priors.xi_r), label="C_r")

    def kernel_gram(self, r: np.ndarray) -> GramMatrix:
        lengths = np.exp(r)
        return factorize(gibbs_matrix(self.coords, self.coords, lengths, lengths), label="C_h")

    def __call__(self, r: np.ndarray) -> float:
        r = np.asarray(r, dtype=float)
        c_h = self.kernel_gram(r)
        n_features = self.H.shape[1]
        quadratic = float(np.sum(self.H * c_h.solve(self.H)))
        prior = float(r @ self.prior_gram.solve(r))
        return -0.5 * n_features * c_h.logdet() - 0.5 * quadratic - 0.5 * prior

    def safe(self, r: np.ndarray) -> float:
        """Como __call__ pero −inf fuera de |r| <= 50 o si C_h es singular."""
        if np.any(np.abs(r) > R_BOUND):
            return -math.inf
        try:
            value = self(r)
        except SingularKernelError:
            return -math.inf
        return value if math.isfinite(value) else -math.inf

    def gradient(self, r: np.ndarray) -> np.ndarray:
        """
        ∇s(r)_k = 2·Σ_j C_kj·Q_kj·W_kj − (C_r⁻¹ r)_k, con W = ½(AAᵀ − D·C⁻¹), A = C⁻¹H y
        Q_kj = (L/2)(1 − 2l_k²/S) + 2d²l_k²/S², S = l_k² + l_j², la derivada de ln C_kj respecto de r_k.
        """
        r = np.asarray(r, dtype=float)
        lengths = np.exp(r)
        c_h = self.kernel_gram(r)
        inverse = c_h.inverse()
        a = inverse @ self.H
        w = 0.5 * (a @ a.T - self.H.shape[1] * inverse)
        l2 = lengths ** 2
        s = l2[:, None] + l2[None, :]
        q = 0.5 * self.latent_dim * (1.0 - 2.0 * l2[:, None] / s) + 2.0 * self.sq_dist * l2[:, None] / s ** 2
        return 2.0 * np.sum(c_h.matrix * q * w, axis=1) - self.prior_gram.solve(r)

    def safe_gradient(self, r: np.ndarray) -> np.ndarray:
        try:
            return self.gradient(r)
        except SingularKernelError as exc:
            raise AscentError(f"C_h singular durante el ascenso: {exc}") from exc

    def safe_fd_gradient(self, r: np.ndarray) -> np.ndarray:
        grad = fd_gradient(self.safe, r)
        if not np.all(np.isfinite(grad)):
            raise AscentError("Gradiente numérico no finito.")
        return grad


def log_target_r(r: np.ndarray, H: np.ndarray, priors: Priors, nodes) -> float:
    coords = getattr(nodes, "coords", nodes)
    return LengthScaleTarget(coords, H, priors)(np.asarray(r, dtype=float))


def fd_gradient(log_target: ScalarFn, r: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    grad = np.empty_like(r)
    for k in range(len(r)):
        h = step * (1.0 + abs(r[k]))
        e = np.zeros_like(r)
        e[k] = h
        grad[k] = (log_target(r + e) - log_target(r - e)) / (2.0 * h)
    return grad


def fd_hessian(grad: VectorFn, r: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Hessiano por diferencias centradas del gradiente, simetrizado."""
    r = np.asarray(r, dtype=float)
    k = len(r)
    hessian = np.empty((k, k))
    for j in range(k):
        h = step * (1.0 + abs(r[j]))
        e = np.zeros(k)
        e[j] = h
        hessian[:, j] = (grad(r + e) - grad(r - e)) / (2.0 * h)
    return 0.5 * (hessian + hessian.T)


@dataclass(frozen=True)
class FlooredPrecision:
    """−∇²s con autovalores acotados por debajo: P = Q·diag(λ)·Qᵀ, V = P⁻¹."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_hessian(cls, hessian: np.ndarray, floor: float = EIGEN_FLOOR) -> "FlooredPrecision":
        if not np.all(np.isfinite(hessian)):
            raise AscentError("Hessiano no finito.")
        values, vectors = np.linalg.eigh(-0.5 * (hessian + hessian.T))
        return cls(np.maximum(values, floor), vectors)

    def covariance_times(self, v: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ ((self.eigenvectors.T @ v) / self.eigenvalues)

    def draw(self, mean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal(len(mean))
        return mean + self.eigenvectors @ (eps / np.sqrt(self.eigenvalues))

    def log_density(self, x: np.ndarray, mean: np.ndarray) -> float:
        projected = self.eigenvectors.T @ (x - mean)
        k = len(mean)
        return float(
            -0.5 * np.sum(self.eigenvalues * projected ** 2)
            + 0.5 * np.sum(np.log(self.eigenvalues))
            - 0.5 * k * math.log(2.0 * math.pi)
        )


def newton_ascent(
    r0: np.ndarray,
    log_target: ScalarFn,
    grad: VectorFn,
    hessian: Optional[VectorFn] = None,
    max_iterations: int = MAX_NEWTON_ITERATIONS,
    tol: float = 1e-8,
) -> Tuple[np.ndarray, float]:
    """
    Ascenso de Newton acotado: paso P⁻¹∇s con P = −∇²s (autovalores >= 1e-6), reduciendo el paso
    a la mitad mientras s no aumente. Cada paso aceptado aumenta s estrictamente.
    """
    hessian = hessian or (lambda x: fd_hessian(grad, x))
    r = np.clip(np.asarray(r0, dtype=float), -R_BOUND, R_BOUND)
    value = log_target(r)
    if not math.isfinite(value):
        raise AscentError("s(r) no es finita en el punto inicial.")
    for _ in range(max_iterations):
        g = grad(r)
        if not np.all(np.isfinite(g)):
            raise AscentError("Gradiente no finito.")
        step = FlooredPrecision.from_hessian(hessian(r)).covariance_times(g)
        scale = 1.0
        for _ in range(MAX_STEP_HALVINGS):
            candidate = np.clip(r + scale * step, -R_BOUND, R_BOUND)
            candidate_value = log_target(candidate)
            if math.isfinite(candidate_value) and candidate_value > value:
                break
            scale *= 0.5
        else:
            return r, value
        gain = candidate_value - value
        r, value = candidate, candidate_value
        if gain <= tol * (1.0 + abs(value)):
            break
    return r, value


def acceptance_probability(log_target_new: float, log_target_old: float, log_q_old: float, log_q_new: float) -> float:
    """min{1, e^{s(r*)}·q(r)/(e^{s(r)}·q(r*))}."""
    if not math.isfinite(log_target_new):
        return 0.0
    log_ratio = (log_target_new - log_target_old) + (log_q_old - log_q_new)
    return 1.0 if log_ratio >= 0 else math.exp(log_ratio)


def laplace_proposal(
    r: np.ndarray, log_target: ScalarFn, grad: VectorFn, hessian: Optional[VectorFn] = None
) -> Tuple[np.ndarray, FlooredPrecision]:
    """Propuesta N(m, V) con m = r̂ + V∇s(r̂), V = (−∇²s(r̂))⁻¹ acotada, r̂ el máximo local desde r."""
    hessian = hessian or (lambda x: fd_hessian(grad, x))
    r_hat, _ = newton_ascent(r, log_target, grad, hessian)
    precision = FlooredPrecision.from_hessian(hessian(r_hat))
    mean = r_hat + precision.covariance_times(grad(r_hat))
    return mean, precision


def laplace_metropolis_step(
    r: np.ndarray,
    log_target: ScalarFn,
    grad: VectorFn,
    rng: np.random.Generator,
    hessian: Optional[VectorFn] = None,
) -> Tuple[np.ndarray, bool]:
    """Un paso MH sobre r; si el ascenso falla se rechaza y se conserva r."""
    r = np.asarray(r, dtype=float)
    try:
        mean, precision = laplace_proposal(r, log_target, grad, hessian)
    except AscentError as exc:
        logger.debug(f"Ascenso rechazado, se conserva r: {exc}")
        return r, False
    candidate = precision.draw(mean, rng)
    probability = acceptance_probability(
        log_target(candidate),
        log_target(r),
        precision.log_density(r, mean),
        precision.log_density(candidate, mean),
    )
    if rng.random() < probability:
        return candidate, True
    return r, False
