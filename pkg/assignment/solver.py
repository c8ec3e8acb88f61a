import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .exceptions import AssignmentError, InfeasibleAssignmentError

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CostMatrix:
    """Matriz N×K de costos ‖x_n − y_k‖²; la fila n es el elemento y la columna k el nodo."""

    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(values)):
            raise AssignmentError("La matriz de costos contiene valores no finitos.")
        if np.any(values < 0):
            raise AssignmentError("La matriz de costos contiene entradas negativas.")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_points(cls, X: np.ndarray, Y: np.ndarray) -> "CostMatrix":
        return cls(cdist(np.atleast_2d(X), np.atleast_2d(Y), "sqeuclidean"))

    @property
    def n_elements(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]


def _lowest_index_optimum(values: np.ndarray, nodes: np.ndarray, objective: float) -> np.ndarray:
    """
    Entre las asignaciones óptimas, la lexicográficamente menor en los índices de nodo.

    Fija los elementos en orden: para cada uno prueba los nodos libres menores que el actual y
    adopta el primero que aún admite completar el costo óptimo. La cota por mínimos de fila
    descarta casi todos los candidatos sin resolver el subproblema.
    """
    n_elements, n_nodes = values.shape
    tolerance = TIE_TOLERANCE * max(1.0, abs(objective))
    nodes = nodes.copy()
    free = np.ones(n_nodes, dtype=bool)
    remaining = objective
    for n in range(n_elements):
        later = np.arange(n + 1, n_elements)
        for k in np.flatnonzero(free[: nodes[n]]):
            columns = free.copy()
            columns[k] = False
            columns = np.flatnonzero(columns)
            sub = values[np.ix_(later, columns)]
            bound = values[n, k] + (float(sub.min(axis=1).sum()) if len(later) else 0.0)
            if bound > remaining + tolerance:
                continue
            rows, cols = linear_sum_assignment(sub) if len(later) else (later, later)
            if values[n, k] + float(sub[rows, cols].sum()) <= remaining + tolerance:
                nodes[n] = k
                nodes[later[rows]] = columns[cols]
                break
        free[nodes[n]] = False
        remaining -= values[n, nodes[n]]
    return nodes


def solve_assignment(cost: CostMatrix) -> Tuple[np.ndarray, float]:
    """
    Asignación inyectiva de mínimo costo total (problema de transporte con ofertas unitarias).

    Devuelve (nodes, objective): nodes[n] es el nodo del elemento n. Se resuelve con el
    algoritmo rectangular de camino aumentante más corto de scipy; los empates se rompen
    por el menor índice de nodo, elemento por elemento.
    """
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(cost)
    if cost.n_nodes < cost.n_elements:
        raise InfeasibleAssignmentError(
            f"Asignación infactible: K={cost.n_nodes} nodos para N={cost.n_elements} elementos"
        )
    rows, cols = linear_sum_assignment(cost.values)
    nodes = np.empty(cost.n_elements, dtype=np.int64)
    nodes[rows] = cols
    nodes = _lowest_index_optimum(cost.values, nodes, float(cost.values[rows, cols].sum()))
    objective = float(cost.values[np.arange(cost.n_elements), nodes].sum())
    logger.debug(f"Asignación resuelta: N={cost.n_elements}, K={cost.n_nodes}, costo={objective:.6g}")
    return nodes, objective
