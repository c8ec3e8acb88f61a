import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from assignment.periodic_table import PeriodicTable
from data_model.compounds import CompoundDataset
from data_model.exceptions import UnknownElementError
from data_model.formula import Composition
from data_model.periodic import ATOMIC_NUMBERS, group_of, period_of

from .exceptions import EvaluationError

logger = logging.getLogger(__name__)

STANDARD_NAME = "standard"


@dataclass(frozen=True)
class Descriptor:
    """Coordenadas por elemento (N×L) usadas como descriptores elementales."""

    name: str
    symbols: Tuple[str, ...]
    coords: np.ndarray

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if coords.shape[0] != len(self.symbols):
            raise EvaluationError(f"Descriptor '{self.name}': {len(self.symbols)} símbolos y {coords.shape[0]} filas")
        if len(set(self.symbols)) != len(self.symbols):
            raise EvaluationError(f"Descriptor '{self.name}' con símbolos repetidos.")
        if not np.all(np.isfinite(coords)):
            raise EvaluationError(f"Descriptor '{self.name}' con coordenadas no finitas.")
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "coords", coords)

    @property
    def latent_dim(self) -> int:
        return self.coords.shape[1]

    def coordinates_of(self, symbol: str) -> np.ndarray:
        try:
            return self.coords[self.symbols.index(symbol)]
        except ValueError:
            raise EvaluationError(f"El elemento '{symbol}' no tiene coordenadas en '{self.name}'.") from None


def descriptor_from_table(table: PeriodicTable, name: Optional[str] = None) -> Descriptor:
    return Descriptor(name=name or f"table_{table.provenance.get('restart', 0):02d}",
                      symbols=table.symbols, coords=table.coordinates)


def _scale_axis(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values, dtype=float)
    return 2.0 * (values - lo) / (hi - lo) - 1.0


def standard_descriptor(symbols: Sequence[str]) -> Descriptor:
    """(grupo, periodo) de la tabla estándar, cada eje escalado a [−1, 1] sobre los elementos dados."""
    try:
        numbers = [ATOMIC_NUMBERS[s] for s in symbols]
    except KeyError as exc:
        raise EvaluationError(f"Símbolo desconocido en el descriptor estándar: {exc}") from exc
    groups = np.array([group_of(z) for z in numbers], dtype=float)
    periods = np.array([period_of(z) for z in numbers], dtype=float)
    return Descriptor(STANDARD_NAME, tuple(symbols), np.column_stack([_scale_axis(groups), _scale_axis(periods)]))


def phi(composition: Composition, descriptor: Descriptor) -> np.ndarray:
    """φ(S) = Σ_n w_n(S)·u_k(n): combinación convexa de las coordenadas de sus elementos."""
    try:
        weights = composition.weight_vector(descriptor.symbols)
    except UnknownElementError as exc:
        raise EvaluationError(str(exc)) from exc
    return weights @ descriptor.coords


def feature_matrix(dataset: CompoundDataset, descriptor: Descriptor) -> np.ndarray:
    """Matriz M×L con φ de cada compuesto."""
    try:
        weights = dataset.weight_matrix(descriptor.symbols)
    except UnknownElementError as exc:
        raise EvaluationError(str(exc)) from exc
    return weights @ descriptor.coords
