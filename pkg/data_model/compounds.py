import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .elements import ElementTable, _line_number
from .exceptions import DataModelError, FormulaError, UnknownElementError
from .formula import Composition, parse_formula

logger = logging.getLogger(__name__)

UNIT_PREFIX = "# unit:"
COMPOUND_COLUMNS = ("formula", "target")


@dataclass(frozen=True)
class CompoundRecord:
    formula: str
    composition: Composition
    target: float


@dataclass(frozen=True)
class CompoundDataset:
    """Compuestos con su valor objetivo; la unidad se declara y nunca se convierte."""

    records: Tuple[CompoundRecord, ...]
    unit: str = ""
    dropped: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for record in self.records:
            if not math.isfinite(record.target):
                raise DataModelError(f"Valor objetivo no finito para {record.formula}")
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def formulas(self) -> List[str]:
        return [r.formula for r in self.records]

    @property
    def targets(self) -> np.ndarray:
        return np.array([r.target for r in self.records], dtype=float)

    def weight_matrix(self, symbols: Sequence[str]) -> np.ndarray:
        """Matriz M×N de fracciones w_n(S) sobre el orden de `symbols`."""
        if not self.records:
            return np.zeros((0, len(symbols)))
        return np.vstack([r.composition.weight_vector(symbols) for r in self.records])

    def incidence(self, symbols: Sequence[str]) -> np.ndarray:
        """Matriz booleana M×N: el elemento aparece en el compuesto."""
        return self.weight_matrix(symbols) > 0


def _read_unit(path: Path) -> Optional[str]:
    with path.open(encoding="utf-8") as handle:
        first = handle.readline().strip()
    if first.lower().startswith(UNIT_PREFIX):
        return first[len(UNIT_PREFIX):].strip()
    return None


def build_dataset(
    rows: Iterable[Tuple[str, float]],
    known_symbols: Iterable[str],
    unit: str = "",
    drop_unknown: bool = True,
) -> CompoundDataset:
    """Construye el conjunto desde pares (fórmula, objetivo) ya leídos."""
    known = set(known_symbols)
    records = []
    dropped = []
    for formula, target in rows:
        try:
            composition = parse_formula(formula, known_symbols=known)
        except UnknownElementError:
            if not drop_unknown:
                raise
            dropped.append(formula)
            continue
        records.append(CompoundRecord(formula=composition.formula, composition=composition, target=float(target)))
    if dropped:
        logger.warning(f"Se descartaron {len(dropped)} compuestos con elementos fuera de la tabla")
    return CompoundDataset(records=tuple(records), unit=unit, dropped=tuple(dropped))


def load_compounds(
    path: Union[str, Path],
    elements: Union[ElementTable, Sequence[str]],
    unit: Optional[str] = None,
    drop_unknown: bool = True,
) -> CompoundDataset:
    """
    Lee el CSV `formula,target` de compuestos.

    La unidad se toma del argumento o de una primera línea opcional `# unit: eV/atom`.
    Los compuestos con elementos ausentes de la tabla se descartan (drop_unknown=True)
    con una advertencia; cualquier otro error de fórmula es fatal.
    """
    path = Path(path)
    if not path.exists():
        raise DataModelError(f"No existe el archivo de compuestos: {path}")
    symbols = elements.symbols if isinstance(elements, ElementTable) else tuple(elements)
    declared = _read_unit(path)
    try:
        frame = pd.read_csv(path, encoding="utf-8", comment=None, skiprows=1 if declared is not None else 0,
                            skipinitialspace=True, dtype={"formula": str})
    except pd.errors.ParserError as exc:
        raise DataModelError(f"CSV de compuestos mal formado en la línea {_line_number(str(exc))}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataModelError(f"CSV de compuestos vacío: {path}") from exc

    frame.columns = [str(c).strip() for c in frame.columns]
    if tuple(frame.columns[:2]) != COMPOUND_COLUMNS:
        raise DataModelError(f"El encabezado debe ser 'formula,target', se encontró: {list(frame.columns)}")
    if frame["formula"].isna().any():
        raise DataModelError("Hay filas sin fórmula en el CSV de compuestos.")
    targets = pd.to_numeric(frame["target"], errors="coerce")
    bad = frame.index[targets.isna() | ~np.isfinite(targets.fillna(0.0))].tolist()
    if bad:
        # +2: encabezado y numeración desde 1
        offset = 2 + (1 if declared is not None else 0)
        raise DataModelError(f"Valor objetivo inválido en las líneas {[i + offset for i in bad][:10]}")

    try:
        dataset = build_dataset(
            zip(frame["formula"].astype(str), targets.to_numpy(dtype=float)),
            known_symbols=symbols,
            unit=unit if unit is not None else (declared or ""),
            drop_unknown=drop_unknown,
        )
    except FormulaError as exc:
        raise DataModelError(f"Fórmula inválida en {path.name}: {exc}") from exc
    logger.info(f"Compuestos cargados desde {path.name}: M={len(dataset)} ({dataset.unit or 'sin unidad'})")
    return dataset
