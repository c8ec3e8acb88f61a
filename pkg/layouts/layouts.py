import logging
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist, pdist

logger = logging.getLogger(__name__)

LAYOUT_KINDS = ("square", "cone", "custom")
DEFAULT_BOUNDS = (-1.0, 1.0)
MIN_NODE_SEPARATION = 1e-9
BOUNDS_TOLERANCE = 1e-12


class LayoutError(Exception):
    """Errores de construcción, validación o expansión de la disposición de nodos."""


@dataclass(frozen=True)
class NodeSet:
    """
    Nodos u_1..u_K del espacio latente con los metadatos de su disposición.

    generation = 0 para la disposición gruesa (paso 1) y 1 para la expandida.
    """

    coords: np.ndarray
    kind: str
    bounds: Tuple[Tuple[float, float], ...]
    generation: int = 0
    side: Optional[int] = None
    ring_sizes: Optional[Tuple[int, ...]] = None
    base_radius: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        object.__setattr__(self, "coords", coords)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.ring_sizes is not None:
            object.__setattr__(self, "ring_sizes", tuple(int(n) for n in self.ring_sizes))
        self._validate()

    def _validate(self) -> None:
        if self.kind not in LAYOUT_KINDS:
            raise LayoutError(f"Tipo de disposición desconocido: {self.kind}")
        k, dims = self.coords.shape
        if k < 1:
            raise LayoutError("La disposición no tiene nodos.")
        if dims not in (1, 2, 3):
            raise LayoutError(f"Dimensión latente no soportada: L={dims}")
        if len(self.bounds) != dims:
            raise LayoutError(f"Se esperaban {dims} intervalos de límites, se recibieron {len(self.bounds)}")
        if not np.all(np.isfinite(self.coords)):
            raise LayoutError("Coordenadas no finitas en la disposición.")
        for axis, (lo, hi) in enumerate(self.bounds):
            if not lo < hi:
                raise LayoutError(f"Límites inválidos en el eje {axis}: [{lo}, {hi}]")
            column = self.coords[:, axis]
            if column.min() < lo - BOUNDS_TOLERANCE or column.max() > hi + BOUNDS_TOLERANCE:
                raise LayoutError(f"Hay nodos fuera de los límites [{lo}, {hi}] en el eje {axis}")
        if k > 1 and pdist(self.coords).min() <= MIN_NODE_SEPARATION:
            raise LayoutError("Dos nodos coinciden (distancia <= 1e-9).")
        if self.kind == "square":
            if self.side is None or self.side * self.side != k or dims != 2:
                raise LayoutError(f"Una disposición cuadrada requiere K = m² en 2-D, se recibió K={k}, L={dims}")
            if not _is_regular_grid(self.coords, self.side):
                raise LayoutError("Las coordenadas no forman una rejilla regular.")

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.coords.shape[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "generation": self.generation,
            "bounds": [list(b) for b in self.bounds],
            "side": self.side,
            "ring_sizes": list(self.ring_sizes) if self.ring_sizes is not None else None,
            "base_radius": self.base_radius,
            "coords": self.coords.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NodeSet":
        try:
            return cls(
                coords=np.asarray(data["coords"], dtype=float),
                kind=data["kind"],
                bounds=tuple(tuple(b) for b in data["bounds"]),
                generation=int(data.get("generation", 0)),
                side=data.get("side"),
                ring_sizes=tuple(data["ring_sizes"]) if data.get("ring_sizes") is not None else None,
                base_radius=data.get("base_radius"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise LayoutError(f"Descripción de disposición inválida: {exc}") from exc


def _is_regular_grid(coords: np.ndarray, side: int) -> bool:
    if side < 2:
        return False
    for axis in (0, 1):
        values = np.unique(coords[:, axis])
        if len(values) != side:
            return False
        steps = np.diff(values)
        if np.ptp(steps) > 1e-9 * max(1.0, steps.max()):
            return False
    # K = m², nodos distintos y m valores por eje: es el producto cartesiano completo
    return True


def _grid_from_values(values: np.ndarray) -> np.ndarray:
    # índice k = i·m + j, con u1 = values[i], u2 = values[j]
    return np.array(list(product(values, values)), dtype=float)


def square_grid(m: int, bounds: Tuple[float, float] = DEFAULT_BOUNDS) -> NodeSet:
    """m×m nodos equiespaciados sobre [lo, hi]², esquinas incluidas."""
    if int(m) != m or m < 2:
        raise LayoutError(f"La rejilla cuadrada requiere m >= 2 nodos por lado, se recibió {m}")
    m = int(m)
    lo, hi = bounds
    values = np.linspace(lo, hi, m)
    return NodeSet(
        coords=_grid_from_values(values),
        kind="square",
        bounds=(tuple(bounds), tuple(bounds)),
        side=m,
    )


def expand_square(nodes: NodeSet) -> Tuple[NodeSet, np.ndarray]:
    """
    Inserta nodos en los puntos medios de cada segmento: m×m → (2m−1)×(2m−1).

    Los nodos originales se conservan exactamente (se copian, no se recalculan).
    Devuelve el nuevo conjunto y el mapeo índice grueso → índice fino.
    """
    if nodes.kind != "square":
        raise LayoutError(f"expand_square requiere una disposición cuadrada, se recibió '{nodes.kind}'")
    if nodes.generation != 0:
        raise LayoutError("La disposición ya fue expandida.")
    m = nodes.side
    values = np.unique(nodes.coords[:, 0])
    fine = np.empty(2 * m - 1)
    fine[0::2] = values
    fine[1::2] = 0.5 * (values[:-1] + values[1:])
    m_fine = 2 * m - 1

    mapping = np.array([(2 * i) * m_fine + 2 * j for i in range(m) for j in range(m)], dtype=int)
    expanded = NodeSet(
        coords=_grid_from_values(fine),
        kind="square",
        bounds=nodes.bounds,
        generation=1,
        side=m_fine,
    )
    logger.debug(f"Rejilla expandida {m}x{m} → {m_fine}x{m_fine}")
    return expanded, mapping


def _cone_coords(ring_sizes: Sequence[int], bounds, base_radius: float) -> np.ndarray:
    (x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi) = bounds
    cx, cy = 0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi)
    n_slices = len(ring_sizes)
    coords = []
    for j, size in enumerate(ring_sizes):
        fraction = j / (n_slices - 1) if n_slices > 1 else 0.0
        z = z_hi - fraction * (z_hi - z_lo)
        radius = base_radius * fraction
        for i in range(size):
            angle = 2.0 * np.pi * i / size
            coords.append((cx + radius * np.cos(angle), cy + radius * np.sin(angle), z))
    return np.array(coords, dtype=float)


def cone_radius(nodes: NodeSet, z: np.ndarray) -> np.ndarray:
    """Perfil lineal del radio: 0 en el vértice (arriba) y base_radius en la base."""
    z_lo, z_hi = nodes.bounds[2]
    return nodes.base_radius * (z_hi - np.asarray(z)) / (z_hi - z_lo)


def cone_layout(
    ring_sizes: Sequence[int],
    bounds: Tuple[Tuple[float, float], ...] = (DEFAULT_BOUNDS,) * 3,
    base_radius: float = 1.0,
) -> NodeSet:
    """
    Nodos sobre la superficie lateral de un cono dentro del cubo `bounds`.

    El corte j está a una altura interpolada linealmente del vértice (arriba) a la base;
    el radio crece linealmente desde 0. Todos los anillos empiezan en el ángulo 0.
    """
    ring_sizes = tuple(int(n) for n in ring_sizes)
    if not ring_sizes:
        raise LayoutError("La lista de anillos del cono está vacía.")
    if ring_sizes[0] != 1:
        raise LayoutError(f"El primer anillo debe ser el vértice (1 nodo), se recibió {ring_sizes[0]}")
    if any(n < 1 for n in ring_sizes):
        raise LayoutError(f"Tamaño de anillo no positivo en {list(ring_sizes)}")
    if len(bounds) != 3:
        raise LayoutError("El cono requiere límites en 3 ejes.")
    half_width = min(hi - lo for lo, hi in bounds[:2]) / 2.0
    if not 0 < base_radius <= half_width + BOUNDS_TOLERANCE:
        raise LayoutError(f"Radio de base fuera del cubo: {base_radius}")
    return NodeSet(
        coords=_cone_coords(ring_sizes, bounds, base_radius),
        kind="cone",
        bounds=tuple(tuple(b) for b in bounds),
        ring_sizes=ring_sizes,
        base_radius=float(base_radius),
    )


def nearest_coarse(coarse: NodeSet, fine: NodeSet) -> np.ndarray:
    """Para cada nodo fino, el índice del nodo grueso más cercano (desempate por menor índice)."""
    if coarse.latent_dim != fine.latent_dim:
        raise LayoutError("Las disposiciones gruesa y fina tienen dimensión latente distinta.")
    return np.argmin(cdist(fine.coords, coarse.coords, "sqeuclidean"), axis=1)


def expand_cone(coarse: NodeSet, fine_ring_sizes: Sequence[int]) -> Tuple[NodeSet, np.ndarray]:
    """Construye el cono fino con el mismo cubo y radio, más el nodo grueso más cercano de cada nodo fino."""
    if coarse.kind != "cone":
        raise LayoutError(f"expand_cone requiere un cono, se recibió '{coarse.kind}'")
    if coarse.generation != 0:
        raise LayoutError("La disposición ya fue expandida.")
    fine = cone_layout(fine_ring_sizes, bounds=coarse.bounds, base_radius=coarse.base_radius)
    fine = NodeSet(
        coords=fine.coords,
        kind="cone",
        bounds=fine.bounds,
        generation=1,
        ring_sizes=fine.ring_sizes,
        base_radius=fine.base_radius,
    )
    return fine, nearest_coarse(coarse, fine)


def load_custom_layout(
    path: Union[str, Path],
    bounds: Optional[Tuple[Tuple[float, float], ...]] = None,
    generation: int = 0,
) -> NodeSet:
    """Lee un CSV `x,y[,z]` con un nodo por línea."""
    path = Path(path)
    if not path.exists():
        raise LayoutError(f"No existe el archivo de disposición: {path}")
    try:
        frame = pd.read_csv(path, encoding="utf-8", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise LayoutError(f"CSV de disposición mal formado ({path.name}): {exc}") from exc
    columns = [str(c).strip() for c in frame.columns]
    if columns not in (["x", "y"], ["x", "y", "z"]):
        raise LayoutError(f"El encabezado debe ser 'x,y' o 'x,y,z', se encontró: {columns}")
    try:
        coords = frame.to_numpy(dtype=float)
    except ValueError as exc:
        raise LayoutError(f"Coordenada no numérica en {path.name}: {exc}") from exc
    if bounds is None:
        bounds = (DEFAULT_BOUNDS,) * coords.shape[1]
    nodes = NodeSet(coords=coords, kind="custom", bounds=tuple(bounds), generation=generation)
    logger.info(f"Disposición personalizada cargada desde {path.name}: K={nodes.n_nodes}, L={nodes.latent_dim}")
    return nodes


def expand_custom(coarse: NodeSet, fine: NodeSet) -> Tuple[NodeSet, np.ndarray]:
    """Adopta `fine` como generación 1 de `coarse` y calcula el nodo grueso más cercano."""
    promoted = NodeSet(coords=fine.coords, kind=fine.kind, bounds=fine.bounds, generation=1,
                       side=fine.side, ring_sizes=fine.ring_sizes, base_radius=fine.base_radius)
    return promoted, nearest_coarse(coarse, promoted)


def check_capacity(nodes: NodeSet, n_elements: int) -> None:
    """El paso 3 asigna cada elemento a un nodo distinto: requiere K >= N."""
    if nodes.n_nodes < n_elements:
        raise LayoutError(
            f"Capacidad insuficiente: K={nodes.n_nodes} nodos para N={n_elements} elementos"
        )


@dataclass(frozen=True)
class LayoutSpec:
    """Descripción de la pareja gruesa → fina usada por el generador."""

    kind: str = "square"
    coarse_side: int = 5
    coarse_rings: Tuple[int, ...] = (1, 4, 8, 12)
    fine_rings: Tuple[int, ...] = (1, 4, 8, 12, 16, 20, 24)
    base_radius: float = 1.0
    coarse_path: Optional[str] = None
    fine_path: Optional[str] = None
    bounds: Tuple[float, float] = DEFAULT_BOUNDS

    def build(self) -> Tuple[NodeSet, NodeSet, np.ndarray]:
        """Devuelve (gruesa, fina, mapeo); el mapeo sigue la convención de cada expansión."""
        if self.kind == "square":
            coarse = square_grid(self.coarse_side, self.bounds)
            fine, mapping = expand_square(coarse)
        elif self.kind == "cone":
            coarse = cone_layout(self.coarse_rings, (tuple(self.bounds),) * 3, self.base_radius)
            fine, mapping = expand_cone(coarse, self.fine_rings)
        elif self.kind == "custom":
            if not self.coarse_path or not self.fine_path:
                raise LayoutError("La disposición personalizada requiere coarse_path y fine_path.")
            coarse = load_custom_layout(self.coarse_path)
            bounds = (tuple(self.bounds),) * coarse.latent_dim
            coarse = replace(coarse, bounds=bounds)
            fine, mapping = expand_custom(coarse, load_custom_layout(self.fine_path, bounds))
        else:
            raise LayoutError(f"Tipo de disposición desconocido: {self.kind}")
        logger.info(f"Disposición {self.kind}: K gruesa={coarse.n_nodes}, K fina={fine.n_nodes}")
        return coarse, fine, mapping
