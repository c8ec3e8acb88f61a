import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from assignment.periodic_table import PeriodicTable
from layouts.layouts import NodeSet
from sampler.state import LatentState

from .exceptions import LandscapeError

logger = logging.getLogger(__name__)

ALL_FEATURES = "all"


@dataclass(frozen=True)
class Landscape:
    """Reconstrucción y_{k,d} = g_k·h_{k,d} de una característica sobre los nodos, en unidades originales."""

    feature: str
    feature_index: int
    values: np.ndarray
    nodes: NodeSet

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(values) != self.nodes.n_nodes:
            raise LandscapeError(f"{len(values)} valores para {self.nodes.n_nodes} nodos")
        if not np.all(np.isfinite(values)):
            raise LandscapeError(f"Paisaje '{self.feature}' con valores no finitos.")
        object.__setattr__(self, "values", values)

    @property
    def minimum(self) -> float:
        return float(self.values.min())

    @property
    def maximum(self) -> float:
        return float(self.values.max())

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"node_index": np.arange(self.nodes.n_nodes)})
        for axis in range(self.nodes.coords.shape[1]):
            frame[f"u{axis + 1}"] = self.nodes.coords[:, axis]
        frame["value"] = self.values
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        return path


def landscape(
    feature_index: int,
    state: LatentState,
    nodes: NodeSet,
    means: Optional[np.ndarray] = None,
    scales: Optional[np.ndarray] = None,
    feature_name: Optional[str] = None,
) -> Landscape:
    """
    Paisaje de la característica d: y_{k,d} = g_k·h_{k,d}, llevado a unidades originales con
    scale_d y mean_d cuando se conocen los momentos de estandarización.
    """
    n_features = state.H.shape[1]
    if not 0 <= feature_index < n_features:
        raise LandscapeError(f"Índice de característica fuera de rango: {feature_index} (D={n_features})")
    if state.n_nodes != nodes.n_nodes:
        raise LandscapeError("El estado no corresponde a la disposición.")
    values = state.g * state.H[:, feature_index]
    if scales is not None:
        values = values * np.asarray(scales, dtype=float)[feature_index]
    if means is not None:
        values = values + np.asarray(means, dtype=float)[feature_index]
    return Landscape(
        feature=feature_name or f"f{feature_index}",
        feature_index=feature_index,
        values=values,
        nodes=nodes,
    )


def resolve_features(table: PeriodicTable, requested: Union[str, Sequence[str]]) -> List[int]:
    """Índices de las características pedidas por nombre; "all" selecciona todas."""
    names = table.feature_names or tuple(f"f{d}" for d in range(table.state.H.shape[1]))
    if isinstance(requested, str):
        requested = list(names) if requested == ALL_FEATURES else [requested]
    unknown = [name for name in requested if name not in names]
    if unknown:
        raise LandscapeError(
            f"Característica desconocida: {', '.join(unknown)}. Válidas: {', '.join(names)}"
        )
    return [names.index(name) for name in requested]


def table_landscape(table: PeriodicTable, feature: Union[int, str]) -> Landscape:
    index = feature if isinstance(feature, int) else resolve_features(table, feature)[0]
    name = table.feature_names[index] if index < len(table.feature_names) else None
    return landscape(index, table.state, table.nodes, table.means, table.scales, feature_name=name)
