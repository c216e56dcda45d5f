import logging
import typing as tp
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import digamma, polygamma

from config import IndexConfig
from src.utils.exceptions import DegenerateSample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GammaStandardizer:
    shape: float
    scale: float
    zero_mass: float
    calibration_month: int
    reference_years: tp.Tuple[int, int]
    location: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"Gamma parameters must be positive, got shape={self.shape} scale={self.scale}")
        if not 0 <= self.zero_mass < 1:
            raise ValueError(f"Zero mass must lie in [0, 1), got {self.zero_mass}")
        if not 1 <= self.calibration_month <= 12:
            raise ValueError(f"Calibration month must lie in 1..12, got {self.calibration_month}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale


def _gamma_mle(positive: np.ndarray, max_iter: int, tolerance: float) -> tp.Optional[tp.Tuple[float, float]]:
    """
    Maximum likelihood gamma fit by Newton iterations on the profile equation of the shape,
    log(k) - digamma(k) = log(mean) - mean(log x), started at the method-of-moments shape.
    :return: (shape, scale) or None when the iterations do not converge
    """
    mean = positive.mean()
    target = np.log(mean) - np.log(positive).mean()
    shape = mean ** 2 / positive.var()
    for _ in range(max_iter):
        value = np.log(shape) - digamma(shape) - target
        slope = 1.0 / shape - polygamma(1, shape)
        updated = shape - value / slope
        if updated <= 0:
            updated = shape / 2
        if abs(updated - shape) <= tolerance * updated:
            # scale = mean / shape keeps the fitted mean on the sample mean
            return float(updated), float(mean / updated)
        shape = updated
    return None


def _gamma_moments(positive: np.ndarray, variance_floor_cv: float) -> tp.Tuple[float, float]:
    mean = positive.mean()
    variance = positive.var(ddof=1) if positive.size > 1 else 0.0
    variance = max(variance, (variance_floor_cv * mean) ** 2)
    return float(mean ** 2 / variance), float(variance / mean)


def fit_standardizer(values: tp.Sequence[float], calibration_month: int = 1,
                     reference_years: tp.Tuple[int, int] = (0, 0), location: float = 0.0,
                     min_positive: int = None) -> GammaStandardizer:
    """
    Calibrate the mixed zero / gamma distribution of one calendar month.
    :param values: 3-month aggregates of the calibration month across the reference years
    :param calibration_month: month ending the windows
    :param reference_years: first and last year of the reference period
    :param location: shift subtracted from every value before fitting
    :param min_positive: minimum number of positive values for a maximum likelihood fit
    :return: fitted standardizer, flagged `degenerate` when the moment fallback was used
    """
    min_positive = IndexConfig.MIN_POSITIVE_VALUES if min_positive is None else min_positive
    sample = np.asarray(values, dtype=float)
    sample = sample[np.isfinite(sample)] - location
    if sample.size == 0:
        raise DegenerateSample(f"Month {calibration_month}: empty calibration sample")
    if np.any(sample < 0):
        raise ValueError(f"Month {calibration_month}: calibration values must be non-negative")

    positive = sample[sample > 0]
    if positive.size == 0:
        raise DegenerateSample(f"Month {calibration_month}: no positive value to fit")
    zero_mass = 1.0 - positive.size / sample.size

    params, degenerate = None, False
    if positive.size >= min_positive and np.ptp(positive) > 0:
        params = _gamma_mle(positive, IndexConfig.MLE_MAX_ITER, IndexConfig.MLE_TOLERANCE)
        if params is None:
            logger.warning(f"Month {calibration_month}: gamma MLE did not converge, using moments")
    else:
        logger.warning(f"Month {calibration_month}: degenerate sample ({positive.size} positive values), "
                       f"using moments with a variance floor")
    if params is None:
        params, degenerate = _gamma_moments(positive, IndexConfig.VARIANCE_FLOOR_CV), True

    return GammaStandardizer(shape=params[0], scale=params[1], zero_mass=zero_mass,
                             calibration_month=calibration_month, reference_years=tuple(reference_years),
                             location=location, degenerate=degenerate)


def standardize(value: tp.Union[float, np.ndarray], std: GammaStandardizer) -> tp.Union[float, np.ndarray]:
    """
    Map aggregates to standard normal quantiles through the fitted mixed distribution.
    Zeros take the middle of the point mass, results are clamped to [-CLAMP, CLAMP].
    """
    x = np.asarray(value, dtype=float) - std.location
    positive = x > 0
    with np.errstate(invalid='ignore'):
        lower = np.where(positive, std.zero_mass + (1 - std.zero_mass) * stats.gamma.cdf(x, a=std.shape, scale=std.scale),
                         std.zero_mass / 2)
        upper = np.where(positive, (1 - std.zero_mass) * stats.gamma.sf(x, a=std.shape, scale=std.scale),
                         1 - std.zero_mass / 2)
        # the survival branch keeps precision in the upper tail
        z = np.where(lower < 0.5, stats.norm.ppf(lower), stats.norm.isf(upper))
    z = np.where(np.isnan(x), np.nan, np.clip(z, -IndexConfig.CLAMP, IndexConfig.CLAMP))
    return float(z) if z.ndim == 0 else z
