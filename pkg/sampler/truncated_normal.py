import math

import numpy as np
from scipy.special import ndtr, ndtri

# Por encima de este límite estandarizado la cola de ndtr pierde precisión relativa
TAIL_THRESHOLD = 8.0


def _standard_tail_rejection(a: float, rng: np.random.Generator) -> float:
    """N(0,1) condicionada a x > a (a grande) por rechazo con propuesta exponencial desplazada."""
    alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.exponential(1.0 / alpha)
        if rng.random() <= math.exp(-0.5 * (z - alpha) ** 2):
            return z


def sample_standard_above(a: float, rng: np.random.Generator) -> float:
    """Muestra de N(0,1) truncada a (a, ∞) por CDF inversa sobre la cola superior."""
    if a > TAIL_THRESHOLD:
        return _standard_tail_rejection(a, rng)
    upper_mass = ndtr(-a)
    u = rng.random()
    # u ∈ [0, 1): 1-u evita ndtri(0)
    return float(-ndtri((1.0 - u) * upper_mass))


def sample_truncated_normal(mean: float, std: float, lower: float, rng: np.random.Generator) -> float:
    """Muestra de N(mean, std²) restringida a x > lower."""
    a = (lower - mean) / std
    value = mean + std * sample_standard_above(a, rng)
    # redondeo en la cola profunda
    return max(value, np.nextafter(lower, np.inf))


def truncated_normal_mode(mean: float, lower: float) -> float:
    return max(mean, lower)
