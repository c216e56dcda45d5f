import typing as tp
from dataclasses import dataclass

import numpy as np
import pandas as pd

from config import GlmConfig
from src.utils.exceptions import BadResponse, DimensionMismatch

INTERCEPT = 'intercept'


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class DesignMatrix:
    """
    Regression inputs: intercept plus covariates in a fixed order, log-exposure offset, response and prior weights.
    `exposure` is kept beside the offset since binomial trials and predictions need it on the natural scale.
    """
    x: np.ndarray
    covariates: tp.Tuple[str, ...]
    response: np.ndarray
    exposure: np.ndarray
    offset: np.ndarray
    weights: np.ndarray
    training_years: tp.Tuple[int, int] = (0, 0)

    def __post_init__(self):
        for name in ['x', 'response', 'exposure', 'offset', 'weights']:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = self.x.shape[0]
        if self.x.ndim != 2 or self.x.shape[1] != len(self.covariates) + 1:
            raise DimensionMismatch(f"Design has {self.x.shape} columns for covariates {self.covariates}")
        for name in ['response', 'exposure', 'offset', 'weights']:
            if getattr(self, name).shape != (n,):
                raise DimensionMismatch(f"{name} has shape {getattr(self, name).shape}, expected ({n},)")
        if not np.all(np.isfinite(self.x)) or not np.all(np.isfinite(self.offset)):
            raise BadResponse("Design matrix and offset must be finite")
        if np.any(self.weights <= 0):
            raise BadResponse("Prior weights must be positive")

    @property
    def columns(self) -> tp.Tuple[str, ...]:
        return (INTERCEPT,) + self.covariates

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> 'DesignMatrix':
        return DesignMatrix(x=self.x[rows], covariates=self.covariates, response=self.response[rows],
                            exposure=self.exposure[rows], offset=self.offset[rows], weights=self.weights[rows],
                            training_years=self.training_years)

    def with_response(self, response, weights=None) -> 'DesignMatrix':
        return DesignMatrix(x=self.x, covariates=self.covariates, response=response, exposure=self.exposure,
                            offset=self.offset, weights=self.weights if weights is None else weights,
                            training_years=self.training_years)


def panel_response(panel: pd.DataFrame, response: str) -> np.ndarray:
    """Named response of the panel: 'claims', 'cost' (currency units) or 'severity' (cost per claim)."""
    if response == 'claims':
        return panel['claims'].to_numpy(dtype=float)
    cost = panel['cost_cents'].to_numpy(dtype=float) / 100.0
    if response == 'cost':
        return cost
    if response == 'severity':
        claims = panel['claims'].to_numpy(dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(claims > 0, cost / claims, np.nan)
    raise ValueError(f"Unknown response '{response}'")


def build_design(panel: pd.DataFrame, covariates: tp.Sequence[str] = None, response: str = 'claims',
                 offset: bool = True, weights: tp.Optional[np.ndarray] = None,
                 training_years: tp.Tuple[int, int] = None) -> DesignMatrix:
    """
    Design matrix of a panel.
    :param covariates: covariate columns, defaults to `GlmConfig.COVARIATES`
    :param response: name understood by `panel_response`
    :param offset: use log-exposure as offset, otherwise a zero offset
    :param training_years: defaults to the year range of the panel
    """
    covariates = tuple(covariates or GlmConfig.COVARIATES)
    if training_years is None and 'year' in panel and len(panel):
        training_years = (int(panel['year'].min()), int(panel['year'].max()))
    if 'exposure' in panel:
        # town-years without insured houses carry no information
        keep = panel['exposure'].to_numpy() > 0
        panel = panel[keep]
        if weights is not None:
            weights = np.asarray(weights)[keep]
    missing = [c for c in covariates if c not in panel.columns]
    if missing:
        raise DimensionMismatch(f"Panel has no covariate columns {missing}")
    n = len(panel)
    x = np.column_stack([np.ones(n)] + [panel[c].to_numpy(dtype=float) for c in covariates])
    exposure = panel['exposure'].to_numpy(dtype=float) if 'exposure' in panel else np.ones(n)
    with np.errstate(divide='ignore'):
        log_exposure = np.log(exposure) if offset else np.zeros(n)
    return DesignMatrix(x=x, covariates=covariates, response=panel_response(panel, response), exposure=exposure,
                        offset=log_exposure, weights=np.ones(n) if weights is None else weights,
                        training_years=training_years or (0, 0))
