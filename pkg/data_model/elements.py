import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import DataModelError, MissingValueError, StandardizationError
from .periodic import ATOMIC_NUMBERS, SYMBOLS

logger = logging.getLogger(__name__)

DEFAULT_ATOMIC_NUMBER_CUTOFF = 54
BUNDLED_ELEMENTS_CSV = Path(__file__).parent / "datasets" / "elements_h_xe.csv"
VARIANCE_CONVENTION = "population"
IDENTITY_COLUMNS = ("symbol", "atomic_number")
MISSING_POLICIES = ("drop", "error")


@dataclass(frozen=True)
class ElementTable:
    """Matriz N×D de características por elemento junto con la identidad de cada fila."""

    symbols: Tuple[str, ...]
    atomic_numbers: np.ndarray
    features: np.ndarray
    feature_names: Tuple[str, ...]
    standardized: bool = False
    means: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None
    variance_convention: str = VARIANCE_CONVENTION

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim != 2:
            raise DataModelError(f"La matriz de características debe ser 2-D, se recibió ndim={features.ndim}")
        n_rows, n_cols = features.shape
        if len(self.symbols) != n_rows or len(self.atomic_numbers) != n_rows:
            raise DataModelError("El número de símbolos/números atómicos no coincide con las filas de la matriz.")
        if len(self.feature_names) != n_cols:
            raise DataModelError("El número de nombres de características no coincide con las columnas.")
        z = np.asarray(self.atomic_numbers, dtype=int)
        if len(set(z.tolist())) != len(z):
            raise DataModelError("Hay números atómicos repetidos en la tabla.")
        if np.any((z < 1) | (z > 118)):
            raise DataModelError("Todo número atómico debe estar en [1, 118].")
        if not np.all(np.isfinite(features)):
            raise DataModelError("La matriz de características contiene valores faltantes o no finitos.")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "atomic_numbers", z)
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_arrays(
        cls,
        features: np.ndarray,
        symbols: Optional[Sequence[str]] = None,
        feature_names: Optional[Sequence[str]] = None,
    ) -> "ElementTable":
        """Construye una tabla en memoria; sin símbolos se usan los primeros N elementos."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        n_rows, n_cols = features.shape
        symbols = tuple(symbols) if symbols is not None else SYMBOLS[:n_rows]
        names = tuple(feature_names) if feature_names is not None else tuple(f"f{d}" for d in range(n_cols))
        return cls(
            symbols=tuple(symbols),
            atomic_numbers=np.array([ATOMIC_NUMBERS[s] for s in symbols]),
            features=features,
            feature_names=names,
        )

    @property
    def n_elements(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def index_of(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError as exc:
            raise DataModelError(f"El elemento '{symbol}' no está en la tabla.") from exc

    def feature_index(self, name: str) -> int:
        """Índice de la característica por nombre; el error lista los nombres válidos."""
        if name not in self.feature_names:
            raise DataModelError(
                f"Característica desconocida '{name}'. Válidas: {', '.join(self.feature_names)}"
            )
        return self.feature_names.index(name)


def _line_number(message: str) -> Optional[int]:
    match = re.search(r"line (\d+)", message)
    return int(match.group(1)) if match else None


def load_elements(
    path: Union[str, Path],
    schema: Optional[Sequence[str]] = None,
    cutoff: int = DEFAULT_ATOMIC_NUMBER_CUTOFF,
    missing: str = "drop",
    identity_as_feature: Optional[bool] = None,
) -> ElementTable:
    """
    Lee el CSV de elementos `symbol,atomic_number,<feature...>`.

    Conserva las filas con número atómico <= cutoff y, sobre ellas, descarta (missing="drop")
    o rechaza (missing="error") toda columna con algún valor faltante. Con
    identity_as_feature=True el número atómico también entra como característica; con None
    solo se incluye para el conjunto incluido, que así queda en 54×39.
    """
    path = Path(path)
    if identity_as_feature is None:
        identity_as_feature = path.resolve() == BUNDLED_ELEMENTS_CSV.resolve()
    if missing not in MISSING_POLICIES:
        raise DataModelError(f"Política de faltantes inválida: {missing}. Opciones: {MISSING_POLICIES}")
    if not path.exists():
        raise DataModelError(f"No existe el archivo de elementos: {path}")

    try:
        frame = pd.read_csv(path, encoding="utf-8", skipinitialspace=True)
    except pd.errors.ParserError as exc:
        line = _line_number(str(exc))
        raise DataModelError(f"CSV de elementos mal formado en la línea {line}: {exc}") from exc
    except (pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataModelError(f"No se pudo leer el CSV de elementos {path}: {exc}") from exc

    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    if tuple(columns[:2]) != IDENTITY_COLUMNS:
        raise DataModelError(f"El encabezado debe comenzar con 'symbol,atomic_number', se encontró: {columns[:2]}")

    if frame["atomic_number"].isna().any() or frame["symbol"].isna().any():
        raise DataModelError("Hay filas sin símbolo o sin número atómico.")
    try:
        atomic_numbers = frame["atomic_number"].astype(int)
    except (TypeError, ValueError) as exc:
        raise DataModelError(f"Número atómico no entero en {path}: {exc}") from exc
    frame = frame.assign(atomic_number=atomic_numbers)
    frame["symbol"] = frame["symbol"].astype(str).str.strip()

    for symbol, z in zip(frame["symbol"], frame["atomic_number"]):
        if ATOMIC_NUMBERS.get(symbol) != z:
            raise DataModelError(f"El símbolo '{symbol}' no corresponde al número atómico {z}.")

    frame = frame[frame["atomic_number"] <= cutoff].sort_values("atomic_number", kind="mergesort")
    if frame.empty:
        raise DataModelError(f"Ningún elemento con número atómico <= {cutoff} en {path}")

    feature_columns = [c for c in columns[2:]]
    if schema is not None:
        expected = [c for c in schema if c not in IDENTITY_COLUMNS]
        absent = [c for c in expected if c not in feature_columns]
        if absent:
            raise DataModelError(f"Columnas esperadas ausentes en {path}: {', '.join(absent)}")
        feature_columns = expected

    numeric = {}
    for column in feature_columns:
        try:
            numeric[column] = pd.to_numeric(frame[column], errors="raise")
        except (TypeError, ValueError) as exc:
            raise DataModelError(f"Valor no numérico en la columna '{column}': {exc}") from exc
    values = pd.DataFrame(numeric, index=frame.index)

    with_gaps = [c for c in feature_columns if values[c].isna().any()]
    if with_gaps:
        if missing == "error":
            raise MissingValueError(f"Columnas con valores faltantes: {', '.join(with_gaps)}")
        logger.warning(f"Se descartan {len(with_gaps)} columnas con valores faltantes: {', '.join(with_gaps)}")
        feature_columns = [c for c in feature_columns if c not in with_gaps]

    if identity_as_feature:
        values["atomic_number"] = frame["atomic_number"].astype(float)
        feature_columns = ["atomic_number"] + [c for c in feature_columns if c != "atomic_number"]
    if not feature_columns:
        raise DataModelError(f"No quedan características válidas en {path}")

    table = ElementTable(
        symbols=tuple(frame["symbol"]),
        atomic_numbers=frame["atomic_number"].to_numpy(),
        features=values[feature_columns].to_numpy(dtype=float),
        feature_names=tuple(feature_columns),
    )
    logger.info(f"Tabla de elementos cargada desde {path.name}: N={table.n_elements}, D={table.n_features}")
    return table


def _flat_columns(features: np.ndarray) -> np.ndarray:
    means = features.mean(axis=0)
    scales = features.std(axis=0, ddof=0)
    return scales <= 1e-12 * np.maximum(1.0, np.abs(means))


def drop_constant_features(table: ElementTable) -> ElementTable:
    """Quita las columnas constantes sobre los elementos de la tabla (p. ej. orbitales d antes del Sc)."""
    flat = _flat_columns(table.features)
    if not flat.any():
        return table
    names = [name for name, drop in zip(table.feature_names, flat) if drop]
    logger.warning(f"Se descartan {len(names)} columnas constantes: {', '.join(names)}")
    keep = ~flat
    return replace(
        table,
        features=table.features[:, keep],
        feature_names=tuple(name for name, k in zip(table.feature_names, keep) if k),
        means=None if table.means is None else table.means[keep],
        scales=None if table.scales is None else table.scales[keep],
    )


def standardize(table: ElementTable) -> ElementTable:
    """Centra y escala cada columna a media 0 y varianza poblacional 1 (divisor N)."""
    if table.standardized:
        raise StandardizationError("La tabla ya está estandarizada.")
    means = table.features.mean(axis=0)
    scales = table.features.std(axis=0, ddof=0)
    flat = [name for name, drop in zip(table.feature_names, _flat_columns(table.features)) if drop]
    if flat:
        raise StandardizationError(f"Columnas con varianza cero: {', '.join(flat)}")
    return replace(
        table,
        features=(table.features - means) / scales,
        standardized=True,
        means=means,
        scales=scales,
    )


def destandardize(table: ElementTable) -> ElementTable:
    """Inversa de standardize: recupera las unidades originales."""
    if not table.standardized or table.means is None or table.scales is None:
        raise StandardizationError("La tabla no está estandarizada.")
    return replace(
        table,
        features=table.features * table.scales + table.means,
        standardized=False,
        means=None,
        scales=None,
    )
