"""
Covarianzas del modelo: c_g (y c_r, misma forma) estacionaria, c_h no estacionaria de Gibbs,
ensamblado de matrices de Gram con jitter escalonado y regresión GP sin ruido.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
JITTER_GROWTH = 10.0
SYMMETRY_TOLERANCE = 1e-12

KernelFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class KernelError(Exception):
    """Errores de parámetros o dimensiones de los kernels."""


class SingularKernelError(KernelError):
    """La factorización de Cholesky falla incluso con el jitter máximo."""


@dataclass(frozen=True)
class StationaryKernelParams:
    """
    Hiperparámetros (ν, l) de c_g y c_r.

    Por defecto el denominador del exponente es 2·l (l sin elevar al cuadrado);
    squared_lengthscale=True usa la forma convencional 2·l².
    """

    variance: float
    length_scale: float
    squared_lengthscale: bool = False

    def __post_init__(self):
        for name in ("variance", "length_scale"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise KernelError(f"{name} debe ser positivo y finito, se recibió {value}")

    @property
    def denominator(self) -> float:
        if self.squared_lengthscale:
            return 2.0 * self.length_scale ** 2
        return 2.0 * self.length_scale


def _as_points(points) -> np.ndarray:
    coords = getattr(points, "coords", points)
    return np.atleast_2d(np.asarray(coords, dtype=float))


def kernel_g(u_i, u_j, params: StationaryKernelParams) -> float:
    u_i = np.atleast_1d(np.asarray(u_i, dtype=float))
    u_j = np.atleast_1d(np.asarray(u_j, dtype=float))
    if u_i.shape != u_j.shape:
        raise KernelError(f"Dimensiones distintas: {u_i.shape} vs {u_j.shape}")
    d2 = float(np.sum((u_i - u_j) ** 2))
    return params.variance * math.exp(-d2 / params.denominator)


def kernel_h(u_i, u_j, l_i: float, l_j: float) -> float:
    """Kernel de Gibbs con longitud de escala dependiente de la posición; vale 1 si u_i = u_j y l_i = l_j."""
    if not (l_i > 0 and l_j > 0):
        raise KernelError(f"Las longitudes de escala deben ser positivas: {l_i}, {l_j}")
    u_i = np.atleast_1d(np.asarray(u_i, dtype=float))
    u_j = np.atleast_1d(np.asarray(u_j, dtype=float))
    if u_i.shape != u_j.shape:
        raise KernelError(f"Dimensiones distintas: {u_i.shape} vs {u_j.shape}")
    latent_dim = u_i.shape[0]
    s = l_i ** 2 + l_j ** 2
    d2 = float(np.sum((u_i - u_j) ** 2))
    return (2.0 * l_i * l_j / s) ** (latent_dim / 2.0) * math.exp(-d2 / s)


def stationary_matrix(a, b, params: StationaryKernelParams) -> np.ndarray:
    a, b = _as_points(a), _as_points(b)
    if a.shape[1] != b.shape[1]:
        raise KernelError(f"Dimensiones distintas: {a.shape[1]} vs {b.shape[1]}")
    return params.variance * np.exp(-cdist(a, b, "sqeuclidean") / params.denominator)


def gibbs_matrix(a, b, l_a: np.ndarray, l_b: np.ndarray) -> np.ndarray:
    a, b = _as_points(a), _as_points(b)
    l_a = np.asarray(l_a, dtype=float).reshape(-1)
    l_b = np.asarray(l_b, dtype=float).reshape(-1)
    if a.shape[1] != b.shape[1]:
        raise KernelError(f"Dimensiones distintas: {a.shape[1]} vs {b.shape[1]}")
    if len(l_a) != len(a) or len(l_b) != len(b):
        raise KernelError("Se requiere una longitud de escala por punto.")
    if np.any(l_a <= 0) or np.any(l_b <= 0):
        raise KernelError("Las longitudes de escala deben ser positivas.")
    s = l_a[:, None] ** 2 + l_b[None, :] ** 2
    prefactor = (2.0 * np.outer(l_a, l_b) / s) ** (a.shape[1] / 2.0)
    return prefactor * np.exp(-cdist(a, b, "sqeuclidean") / s)


def with_length_scales(points, r: np.ndarray) -> np.ndarray:
    """Puntos aumentados [u, r]: la última columna es la log-longitud de escala."""
    coords = _as_points(points)
    r = np.asarray(r, dtype=float).reshape(-1, 1)
    if len(r) != len(coords):
        raise KernelError("Se requiere un valor de r por punto.")
    return np.hstack([coords, r])


def stationary_kernel(params: StationaryKernelParams) -> KernelFn:
    return lambda a, b: stationary_matrix(a, b, params)


def gibbs_kernel() -> KernelFn:
    """c_h sobre puntos aumentados [u, r] (ver with_length_scales)."""
    def _kernel(a, b):
        a, b = _as_points(a), _as_points(b)
        return gibbs_matrix(a[:, :-1], b[:, :-1], np.exp(a[:, -1]), np.exp(b[:, -1]))
    return _kernel


@dataclass(frozen=True)
class GramMatrix:
    """Matriz de Gram con su factor de Cholesky inferior y el jitter aplicado."""

    matrix: np.ndarray
    cholesky: np.ndarray
    jitter: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(C + jitter·I)⁻¹ rhs."""
        return cho_solve((self.cholesky, True), rhs)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.cholesky))))

    @property
    def jittered(self) -> np.ndarray:
        """C + jitter·I, la matriz que representa el factor."""
        return self.matrix + self.jitter * np.eye(self.size)

    def inverse(self) -> np.ndarray:
        """(C + jitter·I)⁻¹ simetrizada; el redondeo del solve no conserva la simetría."""
        inverse = self.solve(np.eye(self.size))
        return 0.5 * (inverse + inverse.T)


@dataclass(frozen=True)
class DiagonalPosterior:
    """
    N(μ, Σ) con Σ = (Λ + C⁻¹)⁻¹, Λ = diag(λ) ≥ 0 y C = prior, sin formar C⁻¹.

    Usa B = I + Λ^½ C Λ^½ (autovalores >= 1): Σ·v = C·v − C Λ^½ B⁻¹ Λ^½ C·v.
    """

    prior: GramMatrix
    sqrt_diag: np.ndarray
    factor: np.ndarray
    mean: np.ndarray

    def _gain(self, rhs: np.ndarray) -> np.ndarray:
        """C Λ^½ B⁻¹ rhs."""
        return self.prior.jittered @ (self.sqrt_diag[:, None] * cho_solve((self.factor, True), rhs))

    def covariance(self) -> np.ndarray:
        c = self.prior.jittered
        sigma = c - self._gain(self.sqrt_diag[:, None] * c)
        return 0.5 * (sigma + sigma.T)

    def sample(self, rng: np.random.Generator, n_columns: int) -> np.ndarray:
        """
        Columnas independientes de N(μ_d, Σ) por condicionamiento de una muestra del prior:
        f ~ N(0, C), e ~ N(0, I), muestra = μ + f − C Λ^½ B⁻¹ (Λ^½ f + e).
        """
        k = self.prior.size
        prior_draw = self.prior.cholesky @ rng.standard_normal((k, n_columns))
        noise = rng.standard_normal((k, n_columns))
        mean = self.mean.reshape(k, -1)
        return mean + prior_draw - self._gain(self.sqrt_diag[:, None] * prior_draw + noise)


def diagonal_posterior(prior: GramMatrix, diag: np.ndarray, linear: np.ndarray, label: str = "posterior") -> DiagonalPosterior:
    """Posterior gaussiana con precisión Λ + C⁻¹ y término lineal b: μ = Σ·b (b vector o matriz K×D)."""
    diag = np.asarray(diag, dtype=float).reshape(-1)
    if diag.shape[0] != prior.size:
        raise KernelError(f"Se esperaban {prior.size} precisiones diagonales, se recibieron {diag.shape[0]}")
    if not np.all(np.isfinite(diag)) or np.any(diag < 0):
        raise KernelError(f"Precisiones diagonales inválidas en {label}.")
    linear = np.asarray(linear, dtype=float)
    sqrt_diag = np.sqrt(diag)
    c = prior.jittered
    b = np.eye(prior.size) + sqrt_diag[:, None] * c * sqrt_diag[None, :]
    try:
        factor = cholesky(0.5 * (b + b.T), lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularKernelError(f"Cholesky de I + Λ^½CΛ^½ falla en {label}.") from exc
    rhs = linear.reshape(prior.size, -1)
    projected = c @ rhs
    mean = projected - c @ (sqrt_diag[:, None] * cho_solve((factor, True), sqrt_diag[:, None] * projected))
    return DiagonalPosterior(prior=prior, sqrt_diag=sqrt_diag, factor=factor, mean=mean.reshape(linear.shape))


def factorize(matrix: np.ndarray, label: str = "gram") -> GramMatrix:
    """
    Cholesky con jitter escalonado: empieza en 1e-10·media(diag) y multiplica por 10
    hasta 1e-4·media(diag). Si aún falla, SingularKernelError.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise KernelError(f"La matriz de Gram debe ser cuadrada, se recibió {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise SingularKernelError(f"Matriz {label} con valores no finitos.")
    scale = float(np.mean(np.diag(matrix)))
    if not scale > 0:
        raise SingularKernelError(f"Diagonal no positiva en {label}.")
    if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOLERANCE * max(1.0, scale):
        raise KernelError(f"Matriz {label} no simétrica.")
    matrix = 0.5 * (matrix + matrix.T)

    identity = np.eye(matrix.shape[0])
    relative = JITTER_START
    while relative <= JITTER_MAX * (1 + 1e-9):
        jitter = relative * scale
        try:
            factor = cholesky(matrix + jitter * identity, lower=True, check_finite=False)
        except LinAlgError:
            relative *= JITTER_GROWTH
            continue
        if relative > JITTER_START:
            logger.warning(f"Jitter escalado en {label}: {jitter:.3e} ({relative:.0e}·media diagonal)")
        return GramMatrix(matrix=matrix, cholesky=factor, jitter=jitter)
    raise SingularKernelError(
        f"Cholesky de {label} falla con jitter máximo {JITTER_MAX:.0e}·media diagonal (K={matrix.shape[0]})"
    )


def gram(points, kernel: KernelFn, label: str = "gram") -> GramMatrix:
    """Evalúa `kernel` sobre todos los pares de `points` y factoriza con la política de jitter."""
    coords = _as_points(points)
    if coords.shape[0] < 1:
        raise KernelError("Se requiere al menos un punto.")
    return factorize(kernel(coords, coords), label=label)


def gp_interpolate(
    train_points,
    train_values: np.ndarray,
    kernel: KernelFn,
    query_points,
    train_gram: Optional[GramMatrix] = None,
) -> np.ndarray:
    """
    Media posterior sin ruido k_*ᵀ (C + jitter·I)⁻¹ v en los puntos de consulta.

    train_values puede ser un vector (K,) o una matriz (K, D); las columnas comparten la factorización.
    """
    train = _as_points(train_points)
    query = _as_points(query_points)
    values = np.asarray(train_values, dtype=float)
    if values.shape[0] != train.shape[0]:
        raise KernelError(f"Tamaños distintos: {train.shape[0]} puntos y {values.shape[0]} valores")
    factor = train_gram if train_gram is not None else gram(train, kernel, label="gp_interpolate")
    weights = factor.solve(values)
    return kernel(query, train) @ weights


def gram_eigenvalues(matrix: Union[np.ndarray, GramMatrix]) -> np.ndarray:
    if isinstance(matrix, GramMatrix):
        matrix = matrix.matrix + matrix.jitter * np.eye(matrix.size)
    return np.linalg.eigvalsh(matrix)
