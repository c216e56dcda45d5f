import logging
import typing as tp
from dataclasses import dataclass

import numpy as np
import pandas as pd

from config import CostConfig, GeneralConfig, ZeroInflatedConfig
from src.utils.exceptions import InvalidParam, MissingModel, ModelIncompatible
from . import metrics
from .base_model import BaseModel
from .design import build_design
from .forest import ForestParams, forest_fit
from .glm import Family, FittedGlm, fit_glm, fit_tweedie
from .zero_inflated import fit_zero_inflated

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = ['town_id', 'year', 'predicted_count', 'predicted_avg_cost', 'predicted_total',
                      'frequency_model_id', 'severity_model_id']
COMPARED_METHODS = ('zinb+gamma', 'rfp+gamma', 'tweedie')


@dataclass(frozen=True)
class CompoundPrediction:
    town_id: str
    year: int
    predicted_count: float
    predicted_avg_cost: float
    predicted_total: float
    frequency_model_id: str
    severity_model_id: str


def fit_severity(panel: pd.DataFrame, covariates: tp.Sequence[str] = None) -> FittedGlm:
    """
    Gamma regression of the average cost per claim on the town-years with claims.
    Each row is weighted by its number of claims.
    """
    covariates = covariates or CostConfig.SEVERITY_COVARIATES
    claimed = panel[panel['claims'] > 0]
    design = build_design(claimed, covariates, response='severity', offset=False,
                          weights=claimed['claims'].to_numpy(dtype=float),
                          training_years=(int(panel['year'].min()), int(panel['year'].max())))
    return fit_glm(design, Family.gamma)


def fit_total_cost(panel: pd.DataFrame, power: float = None, covariates: tp.Sequence[str] = None) -> FittedGlm:
    """Tweedie regression of the yearly cost of each town with log-exposure offset."""
    design = build_design(panel, covariates or CostConfig.TWEEDIE_COVARIATES, response='cost')
    return fit_tweedie(design, power)


def _check_compatible(frequency: BaseModel, severity: BaseModel):
    if tuple(frequency.training_years) != tuple(severity.training_years):
        raise ModelIncompatible(f"Frequency model trained on {frequency.training_years}, "
                                f"severity model on {severity.training_years}")
    if set(frequency.covariates) != set(severity.covariates):
        raise ModelIncompatible(f"Frequency model uses covariates {list(frequency.covariates)}, "
                                f"severity model {list(severity.covariates)}")


def compound_predict(frequency: BaseModel, severity: FittedGlm, covariates: pd.DataFrame,
                     exposure=None) -> pd.DataFrame:
    """
    Expected yearly cost per town as expected claims times expected cost per claim.
    :param covariates: panel rows holding town_id, year and the covariates of both models
    :param exposure: defaults to the exposure column of `covariates`
    """
    _check_compatible(frequency, severity)
    exposure = covariates['exposure'].to_numpy(dtype=float) if exposure is None else exposure
    count = frequency.predict(covariates, exposure)
    average = severity.predict(covariates)
    return pd.DataFrame({'town_id': covariates['town_id'].to_numpy(), 'year': covariates['year'].to_numpy(),
                         'predicted_count': count, 'predicted_avg_cost': average,
                         'predicted_total': count * average,
                         'frequency_model_id': frequency.model_id, 'severity_model_id': severity.model_id})


def compound_records(frame: pd.DataFrame) -> tp.List[CompoundPrediction]:
    return [CompoundPrediction(**row) for row in frame[PREDICTION_COLUMNS].to_dict('records')]


def simulate_compound(rate: float, shape: float, scale: float, n: int, seed: int = None) -> np.ndarray:
    """
    Draws of a Poisson number of gamma claims summed per draw.
    The sum of N gamma(shape, scale) variables is gamma(N * shape, scale).
    """
    if rate < 0 or shape <= 0 or scale <= 0:
        raise InvalidParam(f"Need rate >= 0 and positive gamma parameters, got {rate}, {shape}, {scale}")
    rng = np.random.default_rng(GeneralConfig.SEED if seed is None else seed)
    counts = rng.poisson(rate, n)
    totals = np.zeros(n)
    claimed = counts > 0
    totals[claimed] = rng.gamma(counts[claimed] * shape, scale)
    return totals


@dataclass(frozen=True)
class CostPipeline:
    """Total-cost method: a frequency model with a severity model, or a single total-cost model."""
    name: str
    frequency: tp.Optional[BaseModel] = None
    severity: tp.Optional[FittedGlm] = None
    total: tp.Optional[FittedGlm] = None

    @property
    def training_years(self) -> tp.Tuple[int, int]:
        model = self.total if self.total is not None else self.frequency
        return tuple(model.training_years)

    def predict(self, covariates: pd.DataFrame) -> pd.DataFrame:
        if self.total is not None:
            total = self.total.predict(covariates, covariates['exposure'].to_numpy(dtype=float))
            return pd.DataFrame({'town_id': covariates['town_id'].to_numpy(), 'year': covariates['year'].to_numpy(),
                                 'predicted_count': np.nan, 'predicted_avg_cost': np.nan, 'predicted_total': total,
                                 'frequency_model_id': '', 'severity_model_id': self.total.model_id})
        if self.frequency is None or self.severity is None:
            raise MissingModel(f"Cost method {self.name} lacks a frequency or severity model")
        return compound_predict(self.frequency, self.severity, covariates)


def fit_cost_pipelines(panel: pd.DataFrame, year: int, seed: int = None,
                       forest_params: ForestParams = None) -> tp.Dict[str, CostPipeline]:
    """The three compared total-cost methods, fitted on the years before `year`."""
    train = panel[panel['year'] < year]
    design = build_design(train)
    zero_design = build_design(train, ZeroInflatedConfig.ZERO_COVARIATES)
    severity = fit_severity(train)
    return {
        'zinb+gamma': CostPipeline('zinb+gamma', frequency=fit_zero_inflated(design, zero_design, 'zinb'),
                                   severity=severity),
        'rfp+gamma': CostPipeline('rfp+gamma', frequency=forest_fit(train, forest_params, 'poisson', seed),
                                  severity=severity),
        'tweedie': CostPipeline('tweedie', total=fit_total_cost(train)),
    }


@dataclass(frozen=True)
class CostComparison:
    totals: pd.DataFrame
    per_town: pd.DataFrame


def compare_cost_models(panel: pd.DataFrame, year: int, pipelines: tp.Mapping[str, CostPipeline]) -> CostComparison:
    """
    National and per-town predicted costs of one year for every compared method.
    Observed totals and RMSE are filled when the rows of the year carry observed costs.
    """
    missing = [name for name in COMPARED_METHODS if name not in pipelines]
    if missing:
        raise MissingModel(f"No fitted cost method {missing}")
    for name, pipeline in pipelines.items():
        if pipeline.training_years[1] >= year:
            raise MissingModel(f"Cost method {name} was trained up to {pipeline.training_years[1]}, "
                               f"not before {year}")

    rows = panel[panel['year'] == year].sort_values(['town_id'], kind='mergesort')
    observed = rows['cost_cents'].to_numpy(dtype=float) / 100.0 if 'cost_cents' in rows else None

    totals, per_town = [], []
    for name in sorted(pipelines):
        predicted = pipelines[name].predict(rows)
        predicted.insert(0, 'method', name)
        predicted['observed_total'] = observed if observed is not None else np.nan
        per_town.append(predicted)
        totals.append({'method': name, 'year': year, 'predicted_total': float(predicted['predicted_total'].sum()),
                       'observed_total': float(observed.sum()) if observed is not None else np.nan,
                       'rmse': metrics.rmse(observed, predicted['predicted_total']) if observed is not None
                       else np.nan})
    return CostComparison(totals=pd.DataFrame(totals), per_town=pd.concat(per_town, ignore_index=True))
