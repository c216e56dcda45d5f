import logging
import typing as tp
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.models import INTERCEPT, BaseModel, FittedGlm, ZeroInflatedModel, model_spec
from src.utils.exceptions import InvalidParam
from .generator import GeneratorConfig, SyntheticPanel, TRUTH_COVARIATES, generate_panel

logger = logging.getLogger(__name__)

GLM_FAMILIES = ('poisson', 'binomial', 'negbin')
STANDARD_ERRORS = 3.0
THETA_TOLERANCE = 0.5


@dataclass(frozen=True)
class RecoveryResult:
    passed: bool
    table: pd.DataFrame
    model: BaseModel
    synthetic: SyntheticPanel


def _check_compatible(fitter: str, family: str):
    if fitter in GLM_FAMILIES and family in GLM_FAMILIES:
        return
    if fitter in ('zip', 'zinb') and fitter == family:
        return
    if fitter == 'gamma':
        return
    raise InvalidParam(f"A {fitter} fit cannot recover a {family} truth")


def _rows(block: str, terms, truth: tp.Mapping[str, float], estimates, errors) -> tp.List[tp.Dict]:
    return [{'block': block, 'term': term, 'truth': truth.get(term, 0.0), 'estimate': float(estimate),
             'std_error': float(error)} for term, estimate, error in zip(terms, estimates, errors)]


def recovery_table(model: BaseModel, synthetic: SyntheticPanel, standard_errors: float = STANDARD_ERRORS,
                   theta_tolerance: float = THETA_TOLERANCE) -> pd.DataFrame:
    """Estimate against truth per coefficient, with the theta row checked on relative error."""
    truth = synthetic.truth
    count_truth = dict(zip((INTERCEPT,) + TRUTH_COVARIATES, truth.coefficients))
    rows = []
    if isinstance(model, FittedGlm) and model.family.value == 'gamma':
        severity_truth = {INTERCEPT: float(np.log(truth.severity_mean))}
        rows += _rows('severity', model.terms, severity_truth, model.coefficients, model.standard_errors)
    elif isinstance(model, FittedGlm):
        rows += _rows('count', model.terms, count_truth, model.coefficients, model.standard_errors)
    elif isinstance(model, ZeroInflatedModel):
        zero_truth = dict(zip((INTERCEPT,) + TRUTH_COVARIATES, truth.zero_coefficients))
        rows += _rows('count', (INTERCEPT,) + model.covariates, count_truth, model.count_coefficients,
                      model.count_standard_errors)
        rows += _rows('zero', (INTERCEPT,) + model.zero_covariates, zero_truth, model.zero_coefficients,
                      model.zero_standard_errors)
    else:
        raise InvalidParam(f"No coefficients to compare for {type(model).__name__}")
    table = pd.DataFrame(rows)
    table['z'] = (table['estimate'] - table['truth']) / table['std_error']
    table['within'] = table['z'].abs() <= standard_errors

    theta = getattr(model, 'theta', None)
    if theta is not None and truth.theta is not None:
        relative = abs(theta / truth.theta - 1)
        theta_row = pd.DataFrame([{'block': 'theta', 'term': 'theta', 'truth': truth.theta, 'estimate': theta,
                                   'std_error': getattr(model, 'theta_standard_error', None) or np.nan,
                                   'z': np.nan, 'within': relative <= theta_tolerance}])
        table = pd.concat([table, theta_row], ignore_index=True)
    return table


def recovery_test(config: GeneratorConfig, fitter: str, standard_errors: float = STANDARD_ERRORS,
                  theta_tolerance: float = THETA_TOLERANCE, workers: int = None) -> RecoveryResult:
    """
    Generate a panel from `config`, fit it with the named model and compare the estimates to the truth.
    Passes when every coefficient lies within `standard_errors` standard errors of its true value.
    """
    _check_compatible(fitter, config.family)
    synthetic = generate_panel(config, workers)
    model = model_spec(fitter, seed=config.seed, workers=workers).fit(synthetic.panel)
    table = recovery_table(model, synthetic, standard_errors, theta_tolerance)
    passed = bool(table['within'].all())
    if not passed:
        failed = table.loc[~table['within'], ['block', 'term']].itertuples(index=False)
        logger.warning(f"{fitter} on {config.family} truth missed {', '.join(f'{b}:{t}' for b, t in failed)}")
    return RecoveryResult(passed=passed, table=table, model=model, synthetic=synthetic)
