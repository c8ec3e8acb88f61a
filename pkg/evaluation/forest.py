import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from .exceptions import EvaluationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestParams:
    """Hiperparámetros del bosque; sin profundidad máxima y ceil(L/3) variables por división por defecto."""

    n_trees: int = 100
    min_leaf: int = 5
    max_depth: Optional[int] = None
    max_features: Optional[int] = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1 or self.min_leaf < 1:
            raise EvaluationError(f"Hiperparámetros inválidos: {self}")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features is not None:
            return max(1, min(self.max_features, n_features))
        return max(1, math.ceil(n_features / 3))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class ForestModel:
    """Bosque aleatorio de regresión: árboles sobre remuestreos bootstrap, predicción = media de los árboles."""

    def __init__(self, params: Optional[ForestParams] = None, seed: int = 0):
        self.params = params or ForestParams()
        self.seed = seed
        self.estimator: Optional[RandomForestRegressor] = None

    @property
    def n_trees(self) -> int:
        return self.params.n_trees

    def fit(self, features: np.ndarray, targets: np.ndarray) -> "ForestModel":
        features = np.atleast_2d(np.asarray(features, dtype=float))
        targets = np.asarray(targets, dtype=float).reshape(-1)
        if features.shape[0] != len(targets):
            raise EvaluationError(f"{features.shape[0]} filas de descriptores y {len(targets)} objetivos")
        if len(targets) < 2 * self.params.min_leaf:
            raise EvaluationError(
                f"Se requieren al menos {2 * self.params.min_leaf} muestras, se recibieron {len(targets)}"
            )
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
            raise EvaluationError("Descriptores u objetivos no finitos.")
        self.estimator = RandomForestRegressor(
            n_estimators=self.params.n_trees,
            criterion="squared_error",
            max_depth=self.params.max_depth,
            min_samples_leaf=self.params.min_leaf,
            max_features=self.params.features_per_split(features.shape[1]),
            bootstrap=True,
            random_state=self.seed,
            n_jobs=self.params.n_jobs,
        )
        self.estimator.fit(features, targets)
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        if self.estimator is None:
            raise EvaluationError("El bosque no ha sido entrenado.")
        return self.estimator.predict(np.atleast_2d(np.asarray(features, dtype=float)))


def rf_fit(features: np.ndarray, targets: np.ndarray, params: Optional[ForestParams] = None, seed: int = 0) -> ForestModel:
    return ForestModel(params, seed).fit(features, targets)
