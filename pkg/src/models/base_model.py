import hashlib
import typing as tp
from abc import ABC, abstractmethod

import numpy as np
import pandas as pd

from src.utils.exceptions import DimensionMismatch

Covariates = tp.Union[pd.DataFrame, np.ndarray]


def covariate_matrix(covariates: Covariates, columns: tp.Sequence[str]) -> np.ndarray:
    """
    Covariates in the training column order.
    :param covariates: a frame holding the named columns, or an array whose columns already follow `columns`
    """
    if isinstance(covariates, pd.DataFrame):
        missing = [c for c in columns if c not in covariates.columns]
        if missing:
            raise DimensionMismatch(f"Covariates {missing} missing, model expects {list(columns)}")
        return covariates[list(columns)].to_numpy(dtype=float)
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    if x.shape[1] != len(columns):
        raise DimensionMismatch(f"Got {x.shape[1]} covariate columns, model expects {len(columns)} {list(columns)}")
    return x


def exposure_vector(exposure, n: int) -> np.ndarray:
    if exposure is None:
        return np.ones(n)
    exposure = np.broadcast_to(np.asarray(exposure, dtype=float), (n,))
    return np.array(exposure)


class BaseModel(ABC):
    """Fitted model predicting one value per town-year from covariates and exposure."""

    family: str
    covariates: tp.Tuple[str, ...]
    training_years: tp.Tuple[int, int]

    @abstractmethod
    def predict(self, covariates: Covariates, exposure=None) -> np.ndarray:
        ...

    @property
    def model_id(self) -> str:
        digest = hashlib.sha1(repr(self._fingerprint()).encode()).hexdigest()[:10]
        return f"{self.family}-{self.training_years[0]}-{self.training_years[1]}-{digest}"

    def _fingerprint(self) -> tp.Tuple:
        return self.family, self.covariates, self.training_years

    def _matrix(self, covariates: Covariates) -> np.ndarray:
        return covariate_matrix(covariates, self.covariates)
