import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold, StratifiedKFold

from data_model.compounds import CompoundDataset

from .descriptors import Descriptor, feature_matrix
from .exceptions import EvaluationError
from .forest import ForestModel, ForestParams

logger = logging.getLogger(__name__)

MAX_STRATA = 10


@dataclass(frozen=True)
class EvalReport:
    """
    Resultado de la validación cruzada repetida de un descriptor.

    folds[i, m] es el pliegue del compuesto m en la repetición i; abs_errors tiene la misma forma.
    """

    descriptor: str
    formulas: Tuple[str, ...]
    targets: np.ndarray
    folds: np.ndarray
    abs_errors: np.ndarray
    mae_per_repeat: np.ndarray
    rmse_per_repeat: np.ndarray
    unit: str = ""

    @property
    def mae(self) -> float:
        return float(np.mean(self.mae_per_repeat))

    @property
    def mae_std(self) -> float:
        return float(np.std(self.mae_per_repeat))

    @property
    def rmse(self) -> float:
        return float(np.mean(self.rmse_per_repeat))

    @property
    def rmse_std(self) -> float:
        return float(np.std(self.rmse_per_repeat))

    @property
    def compound_errors(self) -> np.ndarray:
        """Error absoluto por compuesto, promediado sobre las repeticiones."""
        return self.abs_errors.mean(axis=0)

    def summary(self) -> Dict[str, Any]:
        return {
            "descriptor": self.descriptor,
            "mae": self.mae,
            "mae_std": self.mae_std,
            "rmse": self.rmse,
            "rmse_std": self.rmse_std,
            "unit": self.unit,
            "n_compounds": len(self.formulas),
            "repeats": int(self.folds.shape[0]),
        }

    def errors_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "formula": list(self.formulas),
            "target": self.targets,
            "abs_error": self.compound_errors,
        })

    def write_errors_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.errors_frame().to_csv(path, index=False, float_format="%.10g")
        return path


def _splitter(targets: np.ndarray, folds: int, random_state: int):
    """Pliegues estratificados por cuantiles del objetivo; sin estratos útiles, KFold simple."""
    n_strata = min(MAX_STRATA, len(targets) // folds)
    if n_strata >= 2 and np.ptp(targets) > 0:
        strata = pd.qcut(targets, q=n_strata, labels=False, duplicates="drop")
        if len(np.unique(strata)) >= 2 and np.bincount(strata).min() >= folds:
            return StratifiedKFold(n_splits=folds, shuffle=True, random_state=random_state).split(targets, strata)
    return KFold(n_splits=folds, shuffle=True, random_state=random_state).split(targets)


def cross_validate(
    dataset: CompoundDataset,
    descriptor: Descriptor,
    folds: int = 5,
    repeats: int = 5,
    params: Optional[ForestParams] = None,
    seed: int = 0,
) -> EvalReport:
    """
    Validación cruzada de k pliegues repetida: MAE y RMSE promediados sobre los pliegues de cada
    repetición; la desviación estándar se toma entre repeticiones independientes.
    """
    if folds < 2:
        raise EvaluationError(f"Se requieren al menos 2 pliegues, se recibió {folds}")
    if repeats < 1:
        raise EvaluationError(f"Se requiere al menos una repetición, se recibió {repeats}")
    if len(dataset) < folds:
        raise EvaluationError(f"Hay {len(dataset)} compuestos para {folds} pliegues")
    params = params or ForestParams()
    features = feature_matrix(dataset, descriptor)
    targets = dataset.targets
    n = len(targets)
    children = np.random.SeedSequence(seed).spawn(repeats)

    fold_ids = np.zeros((repeats, n), dtype=np.int64)
    abs_errors = np.zeros((repeats, n))
    mae = np.zeros(repeats)
    rmse = np.zeros(repeats)
    for i, child in enumerate(children):
        split_state, model_state = (int(v) for v in child.generate_state(2))
        fold_mae, fold_rmse = [], []
        for f, (train, test) in enumerate(_splitter(targets, folds, split_state)):
            model = ForestModel(params, seed=model_state).fit(features[train], targets[train])
            errors = np.abs(model.predict(features[test]) - targets[test])
            fold_ids[i, test] = f
            abs_errors[i, test] = errors
            fold_mae.append(errors.mean())
            fold_rmse.append(np.sqrt(np.mean(errors ** 2)))
        mae[i] = np.mean(fold_mae)
        rmse[i] = np.mean(fold_rmse)
        logger.debug(f"CV {descriptor.name} repetición {i + 1}/{repeats}: MAE={mae[i]:.4f}, RMSE={rmse[i]:.4f}")

    report = EvalReport(
        descriptor=descriptor.name,
        formulas=tuple(dataset.formulas),
        targets=targets,
        folds=fold_ids,
        abs_errors=abs_errors,
        mae_per_repeat=mae,
        rmse_per_repeat=rmse,
        unit=dataset.unit,
    )
    logger.info(
        f"CV {descriptor.name}: MAE={report.mae:.4f}±{report.mae_std:.4f}, "
        f"RMSE={report.rmse:.4f}±{report.rmse_std:.4f} {dataset.unit}".rstrip()
    )
    return report
