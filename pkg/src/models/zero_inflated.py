import logging
import typing as tp
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy import optimize, stats
from scipy.special import digamma, expit, gammaln, log_expit, logit, xlogy

from config import ZeroInflatedConfig
from src.utils.exceptions import BoundaryEstimate, DimensionMismatch, InvalidParam, NonConvergence, ModelError
from .base_model import BaseModel, Covariates, covariate_matrix, exposure_vector
from .design import DesignMatrix, INTERCEPT
from .glm import Family, fit_glm, check_design, check_response

logger = logging.getLogger(__name__)

LOG_EXPOSURE = 'log_exposure'
_NEGLIGIBLE_LOGIT = -30.0


class ZeroInflatedFamily(str, Enum):
    zip = 'zip'
    zinb = 'zinb'

    @property
    def count_family(self) -> Family:
        return Family.poisson if self is ZeroInflatedFamily.zip else Family.negbin


def zi_pmf(y, p, mean, family: tp.Union[ZeroInflatedFamily, str] = 'zip', theta: float = None):
    """
    Probability of y claims under the zero-inflated mixture: a structural zero with probability p,
    otherwise a Poisson or negative binomial count of the given mean.
    """
    family = ZeroInflatedFamily(family)
    y, p, mean = np.asarray(y), np.asarray(p, dtype=float), np.asarray(mean, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(~np.isfinite(p)):
        raise InvalidParam(f"Zero probability must lie in [0, 1], got {p}")
    if np.any(mean <= 0) or np.any(~np.isfinite(mean)):
        raise InvalidParam(f"Count mean must be positive, got {mean}")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise InvalidParam(f"Counts must be non-negative integers, got {y}")
    if family is ZeroInflatedFamily.zinb:
        if theta is None or not theta > 0:
            raise InvalidParam(f"ZINB size must be positive, got {theta}")
        count = stats.nbinom.pmf(y, theta, theta / (theta + mean))
    else:
        count = stats.poisson.pmf(y, mean)
    probability = (1 - p) * count + np.where(y == 0, p, 0.0)
    return float(probability) if probability.ndim == 0 else probability


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class ZeroInflatedModel(BaseModel):
    family: ZeroInflatedFamily
    covariates: tp.Tuple[str, ...]
    zero_covariates: tp.Tuple[str, ...]
    count_coefficients: np.ndarray
    zero_coefficients: np.ndarray
    count_standard_errors: np.ndarray
    zero_standard_errors: np.ndarray
    log_likelihood: float
    n: int
    k: int
    training_years: tp.Tuple[int, int]
    theta: tp.Optional[float] = None
    theta_standard_error: tp.Optional[float] = None
    method: str = 'bfgs'
    boundary: bool = False
    flags: tp.Tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, 'family', ZeroInflatedFamily(self.family))
        for name in ['count_coefficients', 'zero_coefficients', 'count_standard_errors', 'zero_standard_errors']:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (np.all(np.isfinite(self.count_coefficients)) and np.all(np.isfinite(self.zero_coefficients))):
            raise NonConvergence(f"{self.family.value}: coefficients are not finite")

    @property
    def aic(self) -> float:
        return 2 * self.k - 2 * self.log_likelihood

    @property
    def bic(self) -> float:
        return self.k * np.log(self.n) - 2 * self.log_likelihood

    def zero_probability(self, covariates: Covariates, exposure=None) -> np.ndarray:
        return expit(self._zero_matrix(covariates, exposure) @ self.zero_coefficients)

    def count_mean(self, covariates: Covariates, exposure=None) -> np.ndarray:
        x = self._matrix(covariates)
        return exposure_vector(exposure, x.shape[0]) * np.exp(self.count_coefficients[0]
                                                               + x @ self.count_coefficients[1:])

    def predict(self, covariates: Covariates, exposure=None) -> np.ndarray:
        return zi_predict(self, covariates, exposure)

    def coefficient_table(self) -> pd.DataFrame:
        count = pd.DataFrame({'block': 'count', 'term': (INTERCEPT,) + self.covariates,
                              'estimate': self.count_coefficients, 'std_error': self.count_standard_errors})
        zero = pd.DataFrame({'block': 'zero', 'term': (INTERCEPT,) + self.zero_covariates,
                             'estimate': self.zero_coefficients, 'std_error': self.zero_standard_errors})
        return pd.concat([count, zero], ignore_index=True)

    def _zero_matrix(self, covariates: Covariates, exposure=None) -> np.ndarray:
        names = [c for c in self.zero_covariates if c != LOG_EXPOSURE]
        z = covariate_matrix(covariates, names)
        if LOG_EXPOSURE in self.zero_covariates:
            if exposure is None:
                raise DimensionMismatch("The zero block of this model needs the exposure")
            z = np.column_stack([z, np.log(exposure_vector(exposure, z.shape[0]))])
        return np.column_stack([np.ones(z.shape[0]), z])

    def _fingerprint(self) -> tp.Tuple:
        return super()._fingerprint() + (self.zero_covariates, tuple(self.count_coefficients),
                                         tuple(self.zero_coefficients), self.theta)


def zi_predict(model: ZeroInflatedModel, covariates: Covariates, exposure=None) -> np.ndarray:
    """Mixture mean (1 - p) * lambda * E."""
    return (1 - model.zero_probability(covariates, exposure)) * model.count_mean(covariates, exposure)


@dataclass
class _Mixture:
    """Negative log-likelihood of the mixture, scaled by 1 / n, with its analytic gradient."""
    family: ZeroInflatedFamily
    z: np.ndarray
    x: np.ndarray
    offset: np.ndarray
    y: np.ndarray

    @property
    def sizes(self) -> tp.Tuple[int, int]:
        return self.z.shape[1], self.x.shape[1]

    def unpack(self, params: np.ndarray) -> tp.Tuple[np.ndarray, np.ndarray, tp.Optional[float]]:
        q, p = self.sizes
        theta = float(np.exp(params[q + p])) if self.family is ZeroInflatedFamily.zinb else None
        return params[:q], params[q:q + p], theta

    def log_likelihood(self, params: np.ndarray) -> float:
        gamma, beta, theta = self.unpack(params)
        return float(np.sum(self._row_terms(gamma, beta, theta)[0]))

    def _row_terms(self, gamma, beta, theta):
        eta0 = self.z @ gamma
        mu = np.exp(self.x @ beta + self.offset)
        log_pi, log_not_pi = log_expit(eta0), log_expit(-eta0)
        zero = self.y == 0
        if theta is None:
            log_f0 = -mu
            log_count = xlogy(self.y, mu) - mu - gammaln(self.y + 1)
        else:
            log_f0 = theta * np.log(theta / (theta + mu))
            log_count = (gammaln(self.y + theta) - gammaln(theta) - gammaln(self.y + 1)
                         + log_f0 + xlogy(self.y, mu / (theta + mu)))
        log_zero = np.logaddexp(log_pi, log_not_pi + log_f0)
        rows = np.where(zero, log_zero, log_not_pi + log_count)
        return rows, eta0, mu, zero, log_pi, log_zero

    def objective(self, params: np.ndarray) -> tp.Tuple[float, np.ndarray]:
        gamma, beta, theta = self.unpack(params)
        rows, eta0, mu, zero, log_pi, log_zero = self._row_terms(gamma, beta, theta)
        pi = expit(eta0)
        # posterior probability that an observed zero is structural
        r = np.where(zero, np.exp(log_pi - log_zero), 0.0)
        d_eta0 = np.where(zero, r - pi, -pi)
        if theta is None:
            d_eta1 = np.where(zero, -(1 - r) * mu, self.y - mu)
            grads = [self.z.T @ d_eta0, self.x.T @ d_eta1]
        else:
            ratio = np.log(theta / (theta + mu))
            d_eta1 = np.where(zero, -(1 - r) * theta * mu / (theta + mu), theta * (self.y - mu) / (theta + mu))
            d_log_theta = np.where(zero, (1 - r) * theta * (ratio + mu / (theta + mu)),
                                   theta * (digamma(self.y + theta) - digamma(theta) + ratio
                                            + (mu - self.y) / (theta + mu)))
            grads = [self.z.T @ d_eta0, self.x.T @ d_eta1, [d_log_theta.sum()]]
        n = self.y.size
        return -float(rows.sum()) / n, -np.concatenate(grads) / n

    def gradient(self, params: np.ndarray) -> np.ndarray:
        return self.objective(params)[1]


def _em(mixture: _Mixture, params: np.ndarray) -> np.ndarray:
    """Expectation-maximisation on the structural-zero indicators, both blocks refitted each step."""
    q, p = mixture.sizes
    previous = mixture.log_likelihood(params)
    for iteration in range(ZeroInflatedConfig.EM_MAX_ITER):
        gamma, beta, theta = mixture.unpack(params)
        eta0 = mixture.z @ gamma
        mu = np.exp(mixture.x @ beta + mixture.offset)
        log_f0 = -mu if theta is None else theta * np.log(theta / (theta + mu))
        zero = mixture.y == 0
        r = np.where(zero, np.exp(log_expit(eta0) - np.logaddexp(log_expit(eta0), log_expit(-eta0) + log_f0)), 0.0)

        def zero_step(g):
            eta = mixture.z @ g
            value = -np.sum(r * log_expit(eta) + (1 - r) * log_expit(-eta))
            return value, -mixture.z.T @ (r - expit(eta))

        def count_step(c):
            b, t = c[:p], (np.exp(c[p]) if theta is not None else None)
            m = np.exp(mixture.x @ b + mixture.offset)
            w = 1 - r
            if t is None:
                value = -np.sum(w * (xlogy(mixture.y, m) - m))
                return value, -mixture.x.T @ (w * (mixture.y - m))
            ratio = np.log(t / (t + m))
            value = -np.sum(w * (gammaln(mixture.y + t) - gammaln(t) + t * ratio + xlogy(mixture.y, m / (t + m))))
            d_eta = w * t * (mixture.y - m) / (t + m)
            d_log_t = w * t * (digamma(mixture.y + t) - digamma(t) + ratio + (m - mixture.y) / (t + m))
            return value, -np.concatenate([mixture.x.T @ d_eta, [d_log_t.sum()]])

        gamma = optimize.minimize(zero_step, gamma, jac=True, method='BFGS').x
        count = optimize.minimize(count_step, params[q:], jac=True, method='BFGS').x
        params = np.concatenate([gamma, count])
        current = mixture.log_likelihood(params)
        if abs(current - previous) <= ZeroInflatedConfig.TOLERANCE * (abs(current) + 1e-12):
            logger.debug(f"EM converged in {iteration + 1} iterations")
            return params
        previous = current
    raise NonConvergence(f"EM did not converge in {ZeroInflatedConfig.EM_MAX_ITER} iterations")


def _hessian(mixture: _Mixture, params: np.ndarray) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrised."""
    n = mixture.y.size
    columns = []
    for i in range(params.size):
        step = 1e-5 * max(1.0, abs(params[i]))
        up, down = params.copy(), params.copy()
        up[i] += step
        down[i] -= step
        columns.append((mixture.gradient(up) - mixture.gradient(down)) / (2 * step))
    hessian = np.column_stack(columns) * n
    return (hessian + hessian.T) / 2


def _zero_block(design: DesignMatrix, zero_design: tp.Optional[DesignMatrix], with_exposure: bool):
    source = design if zero_design is None else zero_design
    if source.n != design.n:
        raise DimensionMismatch(f"Zero design has {source.n} rows, count design {design.n}")
    names = tuple(ZeroInflatedConfig.ZERO_COVARIATES) if zero_design is None else source.covariates
    if zero_design is None:
        missing = [c for c in names if c not in design.covariates]
        if missing:
            raise DimensionMismatch(f"Zero covariates {missing} are not columns of the count design")
        z = np.column_stack([np.ones(design.n)] + [design.x[:, 1 + design.covariates.index(c)] for c in names])
    else:
        z = np.asarray(source.x)
    if with_exposure:
        z = np.column_stack([z, np.log(design.exposure)])
        names = names + (LOG_EXPOSURE,)
    return z, names


def _start(design: DesignMatrix, mixture: _Mixture, family: ZeroInflatedFamily) -> np.ndarray:
    q, _ = mixture.sizes
    try:
        base = fit_glm(design, family.count_family)
        beta, log_theta = base.coefficients, ([np.log(base.theta)] if base.theta else [])
    except ModelError:
        logger.exception(f"{family.value}: count-block start fit failed, starting from a Poisson fit")
        base = fit_glm(design, Family.poisson)
        beta, log_theta = base.coefficients, ([0.0] if family is ZeroInflatedFamily.zinb else [])
    mu = np.exp(design.x @ beta + design.offset)
    if family is ZeroInflatedFamily.zip:
        expected_zeros = np.exp(-mu).sum()
    else:
        theta = np.exp(log_theta[0])
        expected_zeros = np.sum((theta / (theta + mu)) ** theta)
    excess = (np.sum(design.response == 0) - expected_zeros) / design.n
    gamma = np.zeros(q)
    gamma[0] = logit(np.clip(excess, 0.05, 0.95))
    return np.concatenate([gamma, beta, log_theta])


def fit_zero_inflated(design: DesignMatrix, zero_design: DesignMatrix = None,
                      family: tp.Union[ZeroInflatedFamily, str] = 'zip') -> ZeroInflatedModel:
    """
    Maximum likelihood fit of a zero-inflated count model.
    The count block takes log-exposure as offset; the logistic block uses `zero_design` or,
    when omitted, the configured zero covariates taken from the count design.
    Quasi-Newton on the full likelihood first, expectation-maximisation when it stalls.
    """
    family = ZeroInflatedFamily(family)
    if np.all(design.response == 0):
        raise BoundaryEstimate(f"{family.value}: all responses are zero, the zero probability goes to 1")
    check_response(design, family.count_family)
    check_design(design, family.count_family)
    z, zero_names = _zero_block(design, zero_design, ZeroInflatedConfig.ZERO_EXPOSURE)
    mixture = _Mixture(family=family, z=z, x=np.asarray(design.x), offset=np.asarray(design.offset),
                       y=np.asarray(design.response))
    q, p = mixture.sizes

    start = _start(design, mixture, family)
    # the count model alone, reached with a negligible zero probability
    nested = start.copy()
    nested[:q] = 0.0
    nested[0] = _NEGLIGIBLE_LOGIT

    flags, method = [], 'bfgs'
    result = optimize.minimize(mixture.objective, start, jac=True, method='BFGS',
                               options={'gtol': 1e-6, 'maxiter': ZeroInflatedConfig.MAX_ITER})
    params = result.x
    # precision-loss stops with a small gradient count as converged
    if not result.success and np.linalg.norm(result.jac, np.inf) > 1e-5:
        logger.warning(f"{family.value}: quasi-Newton stalled ({result.message}), refining by EM")
        try:
            params, method = _em(mixture, params), 'em'
        except NonConvergence:
            logger.exception(f"{family.value}: EM refinement failed")
            raise

    boundary = _at_boundary(mixture, params, nested)
    if boundary:
        params = nested
        flags.append('zero probability at boundary')
        logger.warning(f"{family.value}: zero probability collapses to 0, the model reduces to its count family")
    gamma, beta, theta = mixture.unpack(params)
    log_likelihood = mixture.log_likelihood(params)

    hessian = _hessian(mixture, params)
    # at the boundary the zero block is not identified, only the count block gets standard errors
    free = np.arange(q, params.size) if boundary else np.arange(params.size)
    errors = np.full(params.size, np.nan)
    errors[free] = _standard_errors(hessian[np.ix_(free, free)], family, flags)

    return ZeroInflatedModel(family=family, covariates=design.covariates, zero_covariates=zero_names,
                             count_coefficients=beta, zero_coefficients=gamma,
                             count_standard_errors=errors[q:q + p], zero_standard_errors=errors[:q],
                             log_likelihood=log_likelihood, n=design.n, k=params.size,
                             training_years=tuple(design.training_years), theta=theta,
                             theta_standard_error=theta * errors[q + p] if theta is not None else None,
                             method=method, boundary=boundary, flags=tuple(flags))


def _at_boundary(mixture: _Mixture, params: np.ndarray, nested: np.ndarray) -> bool:
    """Whether the zero block adds nothing significant over the nested count fit or has run off."""
    q, _ = mixture.sizes
    statistic = 2 * (mixture.log_likelihood(params) - mixture.log_likelihood(nested))
    critical = stats.chi2.ppf(1 - ZeroInflatedConfig.BOUNDARY_LEVEL, df=q)
    diverged = np.max(np.abs(params[:q])) > ZeroInflatedConfig.DIVERGENCE_LIMIT
    negligible = np.max(expit(mixture.z @ params[:q])) < ZeroInflatedConfig.BOUNDARY_PROBABILITY
    logger.debug(f"Zero block likelihood-ratio statistic {statistic:.3f}, critical value {critical:.3f}")
    return bool(statistic < critical or diverged or negligible)


def _standard_errors(hessian: np.ndarray, family: ZeroInflatedFamily, flags: tp.List[str]) -> np.ndarray:
    try:
        variances = np.diag(np.linalg.inv(hessian))
        if np.any(variances <= 0):
            raise np.linalg.LinAlgError("non-positive variance")
    except np.linalg.LinAlgError:
        flags.append('singular information')
        logger.warning(f"{family.value}: information matrix singular, standard errors from its pseudo-inverse")
        variances = np.abs(np.diag(np.linalg.pinv(hessian)))
    return np.sqrt(variances)
