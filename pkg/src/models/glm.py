import logging
import typing as tp
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.special import expit, gammaln, logit, xlogy

from config import CostConfig, GlmConfig
from src.utils.exceptions import (BadResponse, NonConvergence, QuasiLikelihoodOnly, SeparationError,
                                  SingularDesign)
from . import metrics
from .base_model import BaseModel, Covariates, exposure_vector
from .design import DesignMatrix, INTERCEPT
from .tweedie import check_power, tweedie_log_density

logger = logging.getLogger(__name__)


class Family(str, Enum):
    poisson = 'poisson'
    binomial = 'binomial'
    negbin = 'negbin'
    gamma = 'gamma'
    tweedie = 'tweedie'

    @property
    def extra_parameters(self) -> int:
        """Negbin size or dispersion counted in k besides the coefficients."""
        return 0 if self in (Family.poisson, Family.binomial) else 1

    @property
    def is_count(self) -> bool:
        return self in (Family.poisson, Family.binomial, Family.negbin)


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class FittedGlm(BaseModel):
    family: Family
    covariates: tp.Tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    log_likelihood: tp.Optional[float]
    deviance: float
    n: int
    k: int
    training_years: tp.Tuple[int, int]
    theta: tp.Optional[float] = None
    dispersion: tp.Optional[float] = None
    tweedie_power: tp.Optional[float] = None
    iterations: int = 0
    flags: tp.Tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, 'family', Family(self.family))
        object.__setattr__(self, 'covariates', tuple(self.covariates))
        object.__setattr__(self, 'coefficients', _frozen(self.coefficients))
        object.__setattr__(self, 'standard_errors', _frozen(self.standard_errors))
        if self.coefficients.shape != (len(self.covariates) + 1,):
            raise ValueError(f"{len(self.coefficients)} coefficients for covariates {self.covariates}")

    @property
    def terms(self) -> tp.Tuple[str, ...]:
        return (INTERCEPT,) + self.covariates

    @property
    def aic(self) -> float:
        return information_criteria(self)[0]

    @property
    def bic(self) -> float:
        return information_criteria(self)[1]

    def predict(self, covariates: Covariates, exposure=None) -> np.ndarray:
        return predict_rate(self, covariates, exposure)

    def linear_predictor(self, covariates: Covariates) -> np.ndarray:
        return self.coefficients[0] + self._matrix(covariates) @ self.coefficients[1:]

    def coefficient_table(self) -> pd.DataFrame:
        return pd.DataFrame({'term': self.terms, 'estimate': self.coefficients, 'std_error': self.standard_errors})

    def _fingerprint(self) -> tp.Tuple:
        return super()._fingerprint() + (tuple(self.coefficients), self.theta, self.dispersion, self.tweedie_power)


@dataclass
class _Problem:
    """Arrays of one fit with the family-specific mean, variance and deviance."""
    family: Family
    x: np.ndarray
    y: np.ndarray
    offset: np.ndarray
    prior: np.ndarray
    trials: np.ndarray
    theta: float = None
    power: float = None

    def mean(self, eta: np.ndarray) -> np.ndarray:
        if self.family is Family.binomial:
            return self.trials * expit(eta)
        return np.exp(eta + self.offset)

    def working(self, beta: np.ndarray) -> tp.Tuple[np.ndarray, np.ndarray]:
        """IRLS weights and working response on the scale of X beta."""
        eta = self.x @ beta
        mu = self.mean(eta)
        if self.family is Family.binomial:
            p = np.clip(expit(eta), 1e-15, 1 - 1e-15)
            w = self.trials * p * (1 - p)
            return w, eta + (self.y - mu) / np.maximum(w, 1e-300)
        mu = np.maximum(mu, 1e-300)
        if self.family is Family.poisson:
            w = mu
        elif self.family is Family.negbin:
            w = self.theta * mu / (self.theta + mu)
        elif self.family is Family.gamma:
            w = np.ones_like(mu)
        else:
            w = np.power(mu, 2 - self.power)
        return self.prior * w, eta + (self.y - mu) / mu

    def deviance(self, mu: np.ndarray) -> float:
        if self.family is Family.poisson:
            unit = metrics.poisson_unit_deviance(self.y, mu)
        elif self.family is Family.binomial:
            unit = metrics.binomial_unit_deviance(self.y, mu, self.trials)
        elif self.family is Family.negbin:
            unit = metrics.negbin_unit_deviance(self.y, mu, self.theta)
        elif self.family is Family.gamma:
            unit = metrics.gamma_unit_deviance(self.y, mu)
        else:
            unit = metrics.tweedie_unit_deviance(self.y, mu, self.power)
        return float(np.sum(self.prior * unit))

    def start(self) -> np.ndarray:
        beta = np.zeros(self.x.shape[1])
        if self.family is Family.binomial:
            beta[0] = logit(self.y.sum() / self.trials.sum())
        else:
            beta[0] = np.log(np.sum(self.prior * self.y) / np.sum(self.prior * np.exp(self.offset)))
        return beta

    def observed_information(self, mu: np.ndarray, shape: float = None, phi: float = None) -> np.ndarray:
        """Minus the Hessian of the log-likelihood in beta."""
        if self.family is Family.poisson:
            h = mu
        elif self.family is Family.binomial:
            p = mu / self.trials
            h = self.trials * p * (1 - p)
        elif self.family is Family.negbin:
            h = self.theta * mu * (self.theta + self.y) / (mu + self.theta) ** 2
        elif self.family is Family.gamma:
            h = self.prior * shape * self.y / mu
        else:
            h = self.prior * ((self.power - 1) * self.y * np.power(mu, 1 - self.power)
                              + (2 - self.power) * np.power(mu, 2 - self.power)) / phi
        return (self.x * h[:, None]).T @ self.x


def _irls(problem: _Problem, beta: np.ndarray = None) -> tp.Tuple[np.ndarray, np.ndarray, float, int]:
    """
    Iteratively reweighted least squares with step-halving on deviance increase.
    :return: coefficients, fitted means, deviance and number of iterations
    """
    beta = problem.start() if beta is None else beta
    mu = problem.mean(problem.x @ beta)
    deviance = problem.deviance(mu)
    for iteration in range(1, GlmConfig.MAX_ITER + 1):
        w, z = problem.working(beta)
        root = np.sqrt(w)
        candidate = np.linalg.lstsq(problem.x * root[:, None], z * root, rcond=None)[0]

        for _ in range(GlmConfig.MAX_HALVING):
            with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
                new_mu = problem.mean(problem.x @ candidate)
                new_deviance = problem.deviance(new_mu)
            if np.isfinite(new_deviance) and new_deviance <= deviance * (1 + 1e-12) + 1e-12:
                break
            candidate = (beta + candidate) / 2
        else:
            raise NonConvergence(f"{problem.family.value}: step-halving could not reduce the deviance")

        converged = abs(new_deviance - deviance) / (abs(new_deviance) + 0.1) < GlmConfig.TOLERANCE
        beta, mu, deviance = candidate, new_mu, new_deviance
        if converged:
            return beta, mu, deviance, iteration

    if problem.family is Family.binomial:
        p = mu / problem.trials
        if np.any((p < 1e-10) | (p > 1 - 1e-10)):
            raise SeparationError("binomial: fitted probabilities reach 0 or 1, the data are separated")
    raise NonConvergence(f"{problem.family.value}: no convergence in {GlmConfig.MAX_ITER} IRLS iterations")


def check_response(design: DesignMatrix, family: Family):
    y = design.response
    if not np.all(np.isfinite(y)):
        raise BadResponse(f"{family.value}: response has missing or infinite values")
    integer = np.all(y == np.round(y))
    if family in (Family.poisson, Family.negbin):
        if np.any(y < 0) or not integer:
            raise BadResponse(f"{family.value}: response must hold non-negative counts")
        if not np.any(y > 0):
            raise BadResponse(f"{family.value}: response has no positive count")
    elif family is Family.binomial:
        if np.any(y < 0) or np.any(y > design.exposure) or not integer:
            raise BadResponse("binomial: response must hold counts within [0, exposure]")
        if not np.any(y > 0) or np.all(y == design.exposure):
            raise BadResponse("binomial: response has no success or no failure")
    elif family is Family.gamma:
        if np.any(y <= 0):
            raise BadResponse("gamma: response must be positive")
    else:
        if np.any(y < 0):
            raise BadResponse("tweedie: response must be non-negative")
        if not np.any(y > 0):
            raise BadResponse("tweedie: response has no positive mass")


def check_design(design: DesignMatrix, family: Family):
    k = design.p + family.extra_parameters
    if design.n <= k:
        raise SingularDesign(f"{family.value}: {design.n} rows for {k} parameters")
    rank = np.linalg.matrix_rank(design.x)
    if rank < design.p:
        raise SingularDesign(f"{family.value}: design of rank {rank} for columns {design.columns}")


def _negbin_log_likelihood(y, mu, theta) -> float:
    return float(np.sum(gammaln(y + theta) - gammaln(theta) - gammaln(y + 1)
                        + theta * np.log(theta / (theta + mu)) + xlogy(y, mu / (theta + mu))))


def _gamma_log_likelihood(y, mu, prior, shape) -> float:
    a = prior * shape
    return float(np.sum(a * np.log(a * y / mu) - a * y / mu - np.log(y) - gammaln(a)))


def _log_likelihood(problem: _Problem, mu: np.ndarray, shape: float = None, phi: float = None) -> tp.Optional[float]:
    y = problem.y
    if problem.family is Family.poisson:
        return float(np.sum(xlogy(y, mu) - mu - gammaln(y + 1)))
    if problem.family is Family.binomial:
        p = mu / problem.trials
        n = problem.trials
        return float(np.sum(gammaln(n + 1) - gammaln(y + 1) - gammaln(n - y + 1)
                            + xlogy(y, p) + xlogy(n - y, 1 - p)))
    if problem.family is Family.negbin:
        return _negbin_log_likelihood(y, mu, problem.theta)
    if problem.family is Family.gamma:
        return _gamma_log_likelihood(y, mu, problem.prior, shape)
    if not GlmConfig.TWEEDIE_DENSITY:
        return None
    return float(np.sum(tweedie_log_density(y, mu, phi, problem.power, problem.prior)))


def _fit_theta(problem: _Problem) -> tp.Tuple[float, np.ndarray, tp.List[str]]:
    """Negbin size maximizing the profile likelihood, searched on log(theta) within the configured bracket."""
    low, high = GlmConfig.NEGBIN_LOG_THETA_BRACKET
    state = {'beta': None}

    def objective(log_theta: float) -> float:
        problem.theta = float(np.exp(log_theta))
        try:
            beta, mu, _, _ = _irls(problem, state['beta'])
        except NonConvergence:
            return np.inf
        state['beta'] = beta
        return -_negbin_log_likelihood(problem.y, mu, problem.theta)

    result = optimize.minimize_scalar(objective, bounds=(low, high), method='bounded', options={'xatol': 1e-6})
    flags = []
    if result.x > high - 1e-3 or result.x < low + 1e-3:
        flags.append('theta at search bound')
        logger.warning(f"negbin: size parameter at the search bound, log(theta) = {result.x:.3f}")
    return float(np.exp(result.x)), state['beta'], flags


def _fit_gamma_shape(problem: _Problem, mu: np.ndarray) -> float:
    result = optimize.minimize_scalar(lambda log_shape: -_gamma_log_likelihood(problem.y, mu, problem.prior,
                                                                               np.exp(log_shape)),
                                      bounds=(-10.0, 15.0), method='bounded', options={'xatol': 1e-8})
    return float(np.exp(result.x))


def _standard_errors(problem: _Problem, beta: np.ndarray, mu: np.ndarray, shape: float, phi: float,
                     flags: tp.List[str]) -> np.ndarray:
    information = problem.observed_information(mu, shape, phi)
    try:
        np.linalg.cholesky(information)
    except np.linalg.LinAlgError:
        logger.warning(f"{problem.family.value}: observed information not positive definite, using expected")
        flags.append('expected information')
        w, _ = problem.working(beta)
        scale = shape if problem.family is Family.gamma else (1 / phi if phi else 1.0)
        information = (problem.x * (w * scale)[:, None]).T @ problem.x
    return np.sqrt(np.diag(np.linalg.inv(information)))


def fit_glm(design: DesignMatrix, family: tp.Union[Family, str], power: float = None,
            theta: float = None) -> FittedGlm:
    """
    Maximum likelihood fit of a log-link (logit for binomial) regression with exposure.
    Binomial uses the exposure as number of trials, the other families take log-exposure as offset.
    :param power: Tweedie variance power, within (1, 2)
    :param theta: fixed negbin size; profiled when omitted
    """
    family = Family(family)
    if family is Family.tweedie:
        power = CostConfig.TWEEDIE_POWER if power is None else power
        check_power(power)
    check_response(design, family)
    check_design(design, family)

    problem = _Problem(family=family, x=np.asarray(design.x), y=np.asarray(design.response),
                       offset=np.zeros(design.n) if family is Family.binomial else np.asarray(design.offset),
                       prior=np.asarray(design.weights), trials=np.asarray(design.exposure), power=power)
    flags: tp.List[str] = []
    start = None
    if family is Family.negbin:
        if theta is None:
            theta, start, flags = _fit_theta(problem)
        problem.theta = theta
    beta, mu, deviance, iterations = _irls(problem, start)

    shape = phi = dispersion = None
    if family is Family.gamma:
        shape = _fit_gamma_shape(problem, mu)
        dispersion = 1 / shape
    elif family is Family.tweedie:
        phi = dispersion = deviance / (design.n - design.p)

    log_likelihood = _log_likelihood(problem, mu, shape, phi)
    if log_likelihood is None:
        flags.append('quasi-likelihood')
    elif not np.isfinite(log_likelihood):
        raise NonConvergence(f"{family.value}: log-likelihood is not finite at the fitted coefficients")

    model = FittedGlm(family=family, covariates=design.covariates, coefficients=beta,
                      standard_errors=_standard_errors(problem, beta, mu, shape, phi, flags),
                      log_likelihood=log_likelihood, deviance=deviance, n=design.n,
                      k=design.p + family.extra_parameters, training_years=tuple(design.training_years),
                      theta=theta if family is Family.negbin else None, dispersion=dispersion,
                      tweedie_power=power if family is Family.tweedie else None, iterations=iterations,
                      flags=tuple(flags))
    logger.debug(f"{family.value} fitted on {design.n} rows in {iterations} iterations, deviance {deviance:.6g}")
    return model


def fit_tweedie(design: DesignMatrix, gamma_power: float = None) -> FittedGlm:
    gamma_power = CostConfig.TWEEDIE_POWER if gamma_power is None else gamma_power
    check_power(gamma_power)
    return fit_glm(design, Family.tweedie, power=gamma_power)


@dataclass(frozen=True)
class PowerScan:
    table: pd.DataFrame
    best_power: float


def power_scan(design: DesignMatrix, powers: tp.Sequence[float] = None) -> PowerScan:
    """AIC of Tweedie fits over a grid of variance powers."""
    powers = powers or CostConfig.TWEEDIE_POWER_GRID
    rows = []
    for power in powers:
        try:
            model = fit_tweedie(design, power)
            aic, bic = information_criteria(model)
            rows.append((power, model.log_likelihood, model.dispersion, aic, bic))
        except NonConvergence:
            logger.exception(f"tweedie power {power} did not converge")
            rows.append((power, np.nan, np.nan, np.nan, np.nan))
    table = pd.DataFrame(rows, columns=['power', 'log_likelihood', 'dispersion', 'aic', 'bic'])
    if table['aic'].isna().all():
        raise NonConvergence("tweedie: no power of the grid could be fitted")
    return PowerScan(table=table, best_power=float(table.loc[table['aic'].idxmin(), 'power']))


def predict_rate(model: FittedGlm, covariates: Covariates, exposure=None) -> np.ndarray:
    """
    Expected response per row: counts, probability times trials, average cost or total cost.
    Exposure scales every family but gamma, whose response is a cost per claim.
    """
    eta = model.linear_predictor(covariates)
    exposure = exposure_vector(exposure, eta.shape[0])
    if model.family is Family.binomial:
        return exposure * expit(eta)
    if model.family is Family.gamma:
        return np.exp(eta)
    return exposure * np.exp(eta)


def information_criteria(model: FittedGlm) -> tp.Tuple[float, float]:
    if model.log_likelihood is None:
        raise QuasiLikelihoodOnly(f"{model.family.value} model has no likelihood, enable the Tweedie density")
    aic = 2 * model.k - 2 * model.log_likelihood
    bic = model.k * np.log(model.n) - 2 * model.log_likelihood
    return float(aic), float(bic)
