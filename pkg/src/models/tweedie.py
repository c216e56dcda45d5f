import numpy as np
from scipy.special import gammaln, logsumexp

from config import GlmConfig
from src.utils.exceptions import PowerOutOfRange

_CELLS_PER_BATCH = 4_000_000
_MAX_WIDENING = 12


def check_power(power: float):
    if not 1 < power < 2:
        raise PowerOutOfRange(f"Tweedie power must lie in (1, 2), got {power}")


def _term_peak(y: np.ndarray, phi: np.ndarray, power: float) -> np.ndarray:
    return np.maximum(1.0, np.round(np.power(y, 2 - power) / (phi * (2 - power))))


def _positive_log_density(y: np.ndarray, mu: np.ndarray, phi: np.ndarray, power: float, drop: float) -> np.ndarray:
    """
    Compound Poisson-gamma density of positive values as a sum over the number j of gamma summands,
    Poisson(j; lam) * Gamma(y; j * alpha, tau), accumulated in log space around the largest term.
    """
    lam = np.power(mu, 2 - power) / (phi * (2 - power))
    alpha = (2 - power) / (power - 1)
    tau = phi * (power - 1) * np.power(mu, power - 1)
    peak = _term_peak(y, phi, power)

    def terms(j: np.ndarray) -> np.ndarray:
        shape = j * alpha
        return (-lam[:, None] + j * np.log(lam)[:, None] - gammaln(j + 1)
                + (shape - 1) * np.log(y)[:, None] - (y / tau)[:, None]
                - gammaln(shape) - shape * np.log(tau)[:, None])

    width = int(np.ceil(10 + 6 * np.sqrt(peak.max())))
    for _ in range(_MAX_WIDENING):
        low = np.maximum(1.0, peak - width)
        log_terms = terms(low[:, None] + np.arange(2 * width + 1)[None, :])
        top = log_terms.max(axis=1)
        left_done = (low == 1) | (log_terms[:, 0] < top - drop)
        right_done = log_terms[:, -1] < top - drop
        if np.all(left_done & right_done):
            break
        width *= 2
    return logsumexp(log_terms, axis=1)


def tweedie_log_density(y, mu, phi: float, power: float, weights=None, tolerance: float = None) -> np.ndarray:
    """
    Log density of Tweedie observations with Var(Y) = phi / w * mu^power.
    :param tolerance: relative size below which series terms are dropped
    """
    check_power(power)
    tolerance = tolerance or GlmConfig.TWEEDIE_SERIES_TOLERANCE
    y, mu = np.asarray(y, dtype=float), np.asarray(mu, dtype=float)
    weights = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    phi_i = phi / weights

    out = np.empty_like(y)
    zero = y == 0
    out[zero] = -np.power(mu[zero], 2 - power) / (phi_i[zero] * (2 - power))

    positive = np.flatnonzero(~zero)
    # rows with similar series length are evaluated together
    peaks = _term_peak(y[positive], phi_i[positive], power)
    order = np.argsort(peaks, kind='stable')
    positive, widths = positive[order], 4 * (2 * np.ceil(10 + 6 * np.sqrt(peaks[order])) + 1)
    drop = -np.log(tolerance)
    start = 0
    while start < positive.size:
        stop = min(positive.size, start + max(1, int(_CELLS_PER_BATCH // widths[start])))
        while stop - start > 1 and (stop - start) * widths[stop - 1] > _CELLS_PER_BATCH:
            stop = start + (stop - start) // 2
        rows = positive[start:stop]
        out[rows] = _positive_log_density(y[rows], mu[rows], phi_i[rows], power, drop)
        start = stop
    return out
