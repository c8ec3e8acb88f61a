import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from layouts.layouts import LayoutError, NodeSet
from sampler.exceptions import SamplerError
from sampler.state import LatentState

from .exceptions import AssignmentError

logger = logging.getLogger(__name__)

TABLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PeriodicTable:
    """
    Tabla periódica generada: cada elemento ocupa un nodo distinto del espacio latente.

    Guarda además el estado final del modelo y los momentos de estandarización para poder
    reconstruir los paisajes de propiedades desde el directorio de la corrida.
    """

    symbols: Tuple[str, ...]
    atomic_numbers: np.ndarray
    node_indices: np.ndarray
    nodes: NodeSet
    state: LatentState
    feature_names: Tuple[str, ...] = ()
    means: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None
    provenance: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "atomic_numbers", np.asarray(self.atomic_numbers, dtype=np.int64))
        node_indices = np.asarray(self.node_indices, dtype=np.int64)
        object.__setattr__(self, "node_indices", node_indices)
        n = len(self.symbols)
        if len(self.atomic_numbers) != n or len(node_indices) != n:
            raise AssignmentError("Símbolos, números atómicos y nodos con longitudes distintas.")
        if n and (node_indices.min() < 0 or node_indices.max() >= self.nodes.n_nodes):
            raise AssignmentError("Índice de nodo fuera de la disposición.")
        if len(np.unique(node_indices)) != n:
            raise AssignmentError("Asignación no inyectiva: dos elementos comparten nodo.")
        if self.state.n_nodes != self.nodes.n_nodes:
            raise AssignmentError("El estado no corresponde a la disposición de la tabla.")

    @property
    def n_elements(self) -> int:
        return len(self.symbols)

    @property
    def coordinates(self) -> np.ndarray:
        """Coordenadas u_k(n) de cada elemento, N×L."""
        return self.nodes.coords[self.node_indices]

    @property
    def seed(self) -> Optional[int]:
        return self.provenance.get("seed")

    @property
    def log_likelihood(self) -> float:
        return float(self.provenance.get("log_likelihood", float("nan")))

    def coordinates_of(self, symbol: str) -> np.ndarray:
        try:
            return self.coordinates[self.symbols.index(symbol)]
        except ValueError:
            raise AssignmentError(f"El elemento '{symbol}' no está en la tabla.") from None

    def to_frame(self) -> pd.DataFrame:
        coords = self.coordinates
        frame = pd.DataFrame({
            "symbol": list(self.symbols),
            "atomic_number": self.atomic_numbers,
            "node_index": self.node_indices,
        })
        for axis in range(coords.shape[1]):
            frame[f"u{axis + 1}"] = coords[:, axis]
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": TABLE_FORMAT_VERSION,
            "symbols": list(self.symbols),
            "atomic_numbers": self.atomic_numbers.tolist(),
            "node_indices": self.node_indices.tolist(),
            "nodes": self.nodes.to_dict(),
            "state": self.state.to_dict(),
            "feature_names": list(self.feature_names),
            "means": None if self.means is None else np.asarray(self.means).tolist(),
            "scales": None if self.scales is None else np.asarray(self.scales).tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PeriodicTable":
        if data.get("format_version") != TABLE_FORMAT_VERSION:
            raise AssignmentError(f"Versión de tabla no soportada: {data.get('format_version')}")
        try:
            return cls(
                symbols=tuple(data["symbols"]),
                atomic_numbers=np.asarray(data["atomic_numbers"]),
                node_indices=np.asarray(data["node_indices"]),
                nodes=NodeSet.from_dict(data["nodes"]),
                state=LatentState.from_dict(data["state"]),
                feature_names=tuple(data.get("feature_names", ())),
                means=None if data.get("means") is None else np.asarray(data["means"], dtype=float),
                scales=None if data.get("scales") is None else np.asarray(data["scales"], dtype=float),
                provenance=dict(data.get("provenance", {})),
            )
        except (KeyError, TypeError, LayoutError, SamplerError) as exc:
            raise AssignmentError(f"Tabla serializada inválida: {exc}") from exc

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return path


def load_table(path: Union[str, Path]) -> PeriodicTable:
    path = Path(path)
    if not path.exists():
        raise AssignmentError(f"No existe la tabla: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AssignmentError(f"JSON de tabla corrupto {path.name}: {exc}") from exc
    return PeriodicTable.from_dict(data)
