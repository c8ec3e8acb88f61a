import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from gp_kernels.kernels import StationaryKernelParams

from .exceptions import SamplerError

R_BOUND = 50.0
DEFAULT_XI = (1.0 / 3.0, 3.0)


@dataclass(frozen=True)
class LatentState:
    """
    Estado completo θ = {Z, β, g, H, r} de una cadena.

    Z se guarda como el nodo asignado a cada elemento (`labels`), de modo que cada
    columna de la matriz one-hot tiene exactamente un 1. Y = g·H se recalcula al construir.
    """

    labels: np.ndarray
    beta: float
    g: np.ndarray
    H: np.ndarray
    r: np.ndarray
    Y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        g = np.asarray(self.g, dtype=float).reshape(-1)
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        r = np.asarray(self.r, dtype=float).reshape(-1)
        k = len(g)
        if H.shape[0] != k or len(r) != k:
            raise SamplerError(f"Dimensiones inconsistentes: g={g.shape}, H={H.shape}, r={r.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise SamplerError("Asignación a un nodo inexistente.")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise SamplerError(f"β debe ser positivo y finito, se recibió {self.beta}")
        if np.any(g <= 0) or not np.all(np.isfinite(g)):
            raise SamplerError("Todas las entradas de g deben ser positivas.")
        if not np.all(np.isfinite(H)) or not np.all(np.isfinite(r)):
            raise SamplerError("H o r contienen valores no finitos.")
        if np.any(np.abs(r) > R_BOUND):
            raise SamplerError(f"|r| excede {R_BOUND}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "Y", g[:, None] * H)

    @property
    def n_nodes(self) -> int:
        return len(self.g)

    @property
    def n_elements(self) -> int:
        return len(self.labels)

    @property
    def Z(self) -> np.ndarray:
        """Matriz K×N de asignación 0/1."""
        z = np.zeros((self.n_nodes, self.n_elements), dtype=np.int8)
        z[self.labels, np.arange(self.n_elements)] = 1
        return z

    @property
    def counts(self) -> np.ndarray:
        """N_k = Σ_n z_kn."""
        return np.bincount(self.labels, minlength=self.n_nodes).astype(float)

    @property
    def length_scales(self) -> np.ndarray:
        return np.exp(self.r)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "labels": self.labels.tolist(),
            "beta": self.beta,
            "g": self.g.tolist(),
            "H": self.H.tolist(),
            "r": self.r.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LatentState":
        try:
            return cls(
                labels=np.asarray(data["labels"], dtype=np.int64),
                beta=float(data["beta"]),
                g=np.asarray(data["g"], dtype=float),
                H=np.asarray(data["H"], dtype=float),
                r=np.asarray(data["r"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SamplerError(f"Estado serializado inválido: {exc}") from exc


@dataclass(frozen=True)
class Priors:
    """Hiperparámetros fijos: ξ_g, ξ_r y el prior Gamma(d_β0, s_β0) de β en forma forma/tasa."""

    xi_g: StationaryKernelParams
    xi_r: StationaryKernelParams
    beta_shape: float
    beta_rate: float

    def __post_init__(self):
        if not (self.beta_shape > 0 and self.beta_rate > 0):
            raise SamplerError(f"El prior de β requiere forma y tasa positivas: {self.beta_shape}, {self.beta_rate}")

    @classmethod
    def default_for(cls, n_features: int, squared_lengthscale: bool = False) -> "Priors":
        """ξ_g = ξ_r = (1/3, 3); d_β0 = 2, s_β0 = 2·D (media a priori 1/D)."""
        xi = StationaryKernelParams(*DEFAULT_XI, squared_lengthscale=squared_lengthscale)
        return cls(xi_g=xi, xi_r=xi, beta_shape=2.0, beta_rate=2.0 * n_features)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "xi_g": [self.xi_g.variance, self.xi_g.length_scale],
            "xi_r": [self.xi_r.variance, self.xi_r.length_scale],
            "squared_lengthscale": self.xi_g.squared_lengthscale,
            "beta_shape": self.beta_shape,
            "beta_rate": self.beta_rate,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Priors":
        squared = bool(data.get("squared_lengthscale", False))
        return cls(
            xi_g=StationaryKernelParams(*data["xi_g"], squared_lengthscale=squared),
            xi_r=StationaryKernelParams(*data["xi_r"], squared_lengthscale=squared),
            beta_shape=float(data["beta_shape"]),
            beta_rate=float(data["beta_rate"]),
        )


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 10_000
    burn_in: int = 5_000
    seed: int = 0
    stride: int = 5
    log_every: int = 500
    checkpoint_every: int = 0
    analytic_gradient: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise SamplerError(f"Se requiere T >= 1, se recibió {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise SamplerError(f"Se requiere 0 <= T_b < T, se recibió T_b={self.burn_in}, T={self.iterations}")
        if self.stride < 1:
            raise SamplerError(f"El paso de adelgazamiento debe ser >= 1, se recibió {self.stride}")

    @property
    def recorded_iterations(self) -> List[int]:
        """Iteraciones t > T_b que se promedian: T_b+1, T_b+1+stride, ... <= T."""
        return list(range(self.burn_in + 1, self.iterations + 1, self.stride))

    def is_recorded(self, t: int) -> bool:
        return t > self.burn_in and (t - self.burn_in - 1) % self.stride == 0


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    loglik: float
    beta: float
    accept_r: float


@dataclass(frozen=True)
class PosteriorSummary:
    """Promedios del ensamble {β̄, ḡ, H̄, r̄}, Z resuelto por argmax de responsabilidades promedio y la traza."""

    beta: float
    g: np.ndarray
    H: np.ndarray
    r: np.ndarray
    labels: np.ndarray
    responsibilities: np.ndarray
    trace: List[TraceRecord]
    acceptance_rate: float
    last_state: Optional[LatentState] = None

    def __post_init__(self):
        if np.any(np.asarray(self.g) <= 0):
            raise SamplerError("ḡ debe ser positivo.")

    @property
    def n_samples(self) -> int:
        return len(self.trace)

    @property
    def state(self) -> LatentState:
        return LatentState(labels=self.labels, beta=self.beta, g=self.g, H=self.H, r=self.r)
