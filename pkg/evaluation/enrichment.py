import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import hypergeom

from data_model.compounds import CompoundDataset
from data_model.periodic import ATOMIC_NUMBERS

from .cross_validation import EvalReport
from .exceptions import EvaluationError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.3, 1.0)
ENRICHMENT_COLUMNS = ["symbol", "observed", "expected", "ratio"]


@dataclass(frozen=True)
class EnrichmentTable:
    """
    Sobre-representación de elementos en el subconjunto de compuestos donde `favored` acierta
    (error < umbral bajo) y `other` falla por más del margen.

    observed: compuestos del subconjunto que contienen el elemento; expected: |subconjunto|·frecuencia
    del elemento en el fondo. La razón y el valor p (hipergeométrico, cola superior) son NaN
    cuando el subconjunto está vacío o el elemento no aparece en el fondo.
    """

    favored: str
    other: str
    thresholds: Tuple[float, float]
    subset: Tuple[str, ...]
    symbols: Tuple[str, ...]
    observed: np.ndarray
    expected: np.ndarray
    ratio: np.ndarray
    p_value: np.ndarray

    @property
    def label(self) -> str:
        return f"{self.favored}_vs_{self.other}"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "symbol": list(self.symbols),
            "observed": self.observed,
            "expected": self.expected,
            "ratio": self.ratio,
        }, columns=ENRICHMENT_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        return path

    def to_dict(self) -> Dict[str, Any]:
        def _clean(value: float) -> Optional[float]:
            return None if np.isnan(value) else float(value)

        return {
            "favored": self.favored,
            "other": self.other,
            "thresholds": list(self.thresholds),
            "subset": list(self.subset),
            "elements": [
                {
                    "symbol": symbol,
                    "observed": int(obs),
                    "expected": float(exp),
                    "ratio": _clean(ratio),
                    "p_value": _clean(p),
                }
                for symbol, obs, exp, ratio, p in zip(self.symbols, self.observed, self.expected, self.ratio, self.p_value)
            ],
        }


def _background_symbols(background: CompoundDataset) -> Tuple[str, ...]:
    present = {symbol for record in background.records for symbol in record.composition.symbols}
    return tuple(sorted(present, key=lambda s: ATOMIC_NUMBERS[s]))


def _subset_table(
    mask: np.ndarray,
    favored: str,
    other: str,
    thresholds: Tuple[float, float],
    formulas: Sequence[str],
    incidence: np.ndarray,
    symbols: Tuple[str, ...],
) -> EnrichmentTable:
    n_background = incidence.shape[0]
    n_subset = int(mask.sum())
    background_counts = incidence.sum(axis=0)
    observed = incidence[mask].sum(axis=0).astype(np.int64)
    expected = n_subset * background_counts / max(n_background, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((n_subset > 0) & (expected > 0), observed / expected, np.nan)
    p_value = np.full(len(symbols), np.nan)
    if n_subset > 0:
        valid = background_counts > 0
        p_value[valid] = hypergeom.sf(observed[valid] - 1, n_background, background_counts[valid], n_subset)
    return EnrichmentTable(
        favored=favored,
        other=other,
        thresholds=thresholds,
        subset=tuple(f for f, keep in zip(formulas, mask) if keep),
        symbols=symbols,
        observed=observed,
        expected=expected,
        ratio=ratio,
        p_value=p_value,
    )


def enrichment(
    report_a: EvalReport,
    report_b: EvalReport,
    background: CompoundDataset,
    thresholds: Tuple[float, float] = DEFAULT_THRESHOLDS,
) -> Tuple[EnrichmentTable, EnrichmentTable]:
    """
    Construye D_a (err_a < t y err_b > err_a + m) y D_b (simétrico) con el error absoluto por
    compuesto, y cuenta la incidencia de cada elemento contra el fondo.
    """
    if report_a.formulas != report_b.formulas:
        raise EvaluationError("Los reportes no cubren los mismos compuestos.")
    if tuple(background.formulas) != report_a.formulas:
        raise EvaluationError("El fondo no coincide con los compuestos evaluados.")
    low, margin = thresholds
    err_a, err_b = report_a.compound_errors, report_b.compound_errors
    mask_a = (err_a < low) & (err_b > err_a + margin)
    mask_b = (err_b < low) & (err_a > err_b + margin)
    symbols = _background_symbols(background)
    incidence = background.incidence(symbols)
    formulas = report_a.formulas
    table_a = _subset_table(mask_a, report_a.descriptor, report_b.descriptor, thresholds, formulas, incidence, symbols)
    table_b = _subset_table(mask_b, report_b.descriptor, report_a.descriptor, thresholds, formulas, incidence, symbols)
    logger.info(f"Enriquecimiento: |D_{report_a.descriptor}|={mask_a.sum()}, |D_{report_b.descriptor}|={mask_b.sum()}")
    return table_a, table_b
