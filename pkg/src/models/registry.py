import typing as tp
from dataclasses import dataclass
from functools import partial

import pandas as pd

from config import GeneralConfig, ZeroInflatedConfig
from src.utils.exceptions import InvalidParam
from .base_model import BaseModel
from .cost import fit_severity, fit_total_cost
from .design import build_design
from .forest import ForestParams, forest_fit
from .glm import fit_glm
from .zero_inflated import fit_zero_inflated

COUNT_MODELS = ('poisson', 'binomial', 'negbin', 'zip', 'zinb', 'rf', 'rfp')
COST_MODELS = ('gamma', 'tweedie')
MODEL_NAMES = COUNT_MODELS + COST_MODELS


@dataclass(frozen=True)
class ModelSpec:
    """
    A named fitter of panel rows.
    `target` is what the fitted model predicts: 'claims', 'severity' (cost per claim) or 'cost' (yearly cost).
    """
    name: str
    target: str
    fit: tp.Callable[[pd.DataFrame], BaseModel]


def _fit_glm(panel: pd.DataFrame, family: str) -> BaseModel:
    return fit_glm(build_design(panel), family)


def _fit_zero_inflated(panel: pd.DataFrame, family: str) -> BaseModel:
    return fit_zero_inflated(build_design(panel), build_design(panel, ZeroInflatedConfig.ZERO_COVARIATES), family)


def _fit_forest(panel: pd.DataFrame, mode: str, params: ForestParams, seed: int, workers: int) -> BaseModel:
    return forest_fit(panel, params, mode, seed, workers=workers)


def model_spec(name: str, seed: int = None, forest_params: ForestParams = None, workers: int = None) -> ModelSpec:
    seed = GeneralConfig.SEED if seed is None else seed
    if name in ('poisson', 'binomial', 'negbin'):
        return ModelSpec(name, 'claims', partial(_fit_glm, family=name))
    if name in ('zip', 'zinb'):
        return ModelSpec(name, 'claims', partial(_fit_zero_inflated, family=name))
    if name in ('rf', 'rfp'):
        mode = 'squared' if name == 'rf' else 'poisson'
        return ModelSpec(name, 'claims', partial(_fit_forest, mode=mode, params=forest_params, seed=seed,
                                                 workers=workers))
    if name == 'gamma':
        return ModelSpec(name, 'severity', fit_severity)
    if name == 'tweedie':
        return ModelSpec(name, 'cost', fit_total_cost)
    raise InvalidParam(f"Unknown model '{name}', expected one of {', '.join(MODEL_NAMES)}")


def model_specs(names: tp.Iterable[str], seed: int = None, forest_params: ForestParams = None,
                workers: int = None) -> tp.Dict[str, ModelSpec]:
    return {name: model_spec(name, seed, forest_params, workers) for name in names}
