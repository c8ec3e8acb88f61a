import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from data_model.elements import ElementTable
from layouts.layouts import LayoutError, NodeSet, check_capacity
from sampler.sampler import LDLVSampler
from sampler.state import LatentState, Priors

from .exceptions import AssignmentError, InfeasibleAssignmentError
from .periodic_table import PeriodicTable
from .solver import CostMatrix, solve_assignment

logger = logging.getLogger(__name__)

DEFAULT_FINE_TUNE_ITERATIONS = 10


@dataclass(frozen=True)
class FineTuneStep:
    iteration: int
    objective: float
    joint_log_density: float
    moved: int


def _with(state: LatentState, **changes) -> LatentState:
    values = {"labels": state.labels, "beta": state.beta, "g": state.g, "H": state.H, "r": state.r}
    values.update(changes)
    return LatentState(**values)


def _element_identity(elements: Optional[ElementTable], n_elements: int) -> Tuple[Tuple[str, ...], np.ndarray]:
    if elements is None:
        return tuple(f"E{n + 1}" for n in range(n_elements)), np.arange(1, n_elements + 1)
    return elements.symbols, elements.atomic_numbers


def fine_tune(
    X: np.ndarray,
    nodes: NodeSet,
    state: LatentState,
    priors: Priors,
    iterations: int = DEFAULT_FINE_TUNE_ITERATIONS,
    elements: Optional[ElementTable] = None,
    provenance: Optional[Dict[str, Any]] = None,
    analytic_gradient: bool = True,
    tag: str = "",
) -> Tuple[PeriodicTable, LatentState]:
    """
    Paso 3: alterna la asignación uno a uno con las modas condicionales de β, g, H y r.

    Cada iteración resuelve Z por transporte sobre los costos ‖x_n − y_k‖² del estado
    vigente y luego fija β, g, H y r en sus modas. Se devuelve el iterado con mayor
    densidad conjunta ln p(X, θ). Con iterations=0 solo se asigna el estado interpolado.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if iterations < 0:
        raise AssignmentError(f"El número de iteraciones de ajuste fino debe ser >= 0, se recibió {iterations}")
    try:
        check_capacity(nodes, X.shape[0])
    except LayoutError as exc:
        raise InfeasibleAssignmentError(str(exc)) from exc

    sampler = LDLVSampler(X, nodes, priors, analytic_gradient=analytic_gradient)
    labels, objective = solve_assignment(CostMatrix.from_points(X, state.Y))
    current = _with(state, labels=labels)
    best_state, best_labels = current, labels
    best_density = sampler.joint_log_density(current)
    best_iteration = 0
    history: List[FineTuneStep] = [FineTuneStep(0, objective, best_density, 0)]

    previous_labels = labels
    for t in range(1, iterations + 1):
        if t > 1:
            labels, objective = solve_assignment(CostMatrix.from_points(X, current.Y))
            current = _with(current, labels=labels)
        current = _with(current, beta=sampler.beta_mode(current))
        current = _with(current, g=sampler.g_mode(current))
        current = _with(current, H=sampler.H_mode(current))
        current = _with(current, r=sampler.r_mode(current))
        density = sampler.joint_log_density(current)
        moved = int(np.sum(labels != previous_labels))
        previous_labels = labels
        history.append(FineTuneStep(t, objective, density, moved))
        logger.info(f"{tag} ajuste fino {t}/{iterations} | costo={objective:.5g} | ln p(X,θ)={density:.5g} | movidos={moved}")
        if density > best_density:
            best_state, best_labels, best_density, best_iteration = current, labels, density, t

    symbols, atomic_numbers = _element_identity(elements, X.shape[0])
    record = dict(provenance or {})
    record.update({
        "log_likelihood": best_density,
        "marginal_log_likelihood": sampler.marginal_log_likelihood(best_state),
        "fine_tune_iterations": iterations,
        "best_iteration": best_iteration,
        "g_mode": "coordinate-wise truncated-normal mode",
        "history": [asdict(step) for step in history],
    })
    table = PeriodicTable(
        symbols=symbols,
        atomic_numbers=atomic_numbers,
        node_indices=best_labels,
        nodes=nodes,
        state=best_state,
        feature_names=elements.feature_names if elements is not None else (),
        means=elements.means if elements is not None else None,
        scales=elements.scales if elements is not None else None,
        provenance=record,
    )
    return table, best_state
