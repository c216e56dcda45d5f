import numpy as np
from scipy.special import xlogy


def rmse(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float)
    return float(np.sqrt(np.mean(np.square(y_pred - y_true))))


def mse(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float)
    return float(np.mean(np.square(y_pred - y_true)))


def poisson_unit_deviance(y_true, y_pred) -> np.ndarray:
    """
    Per-row Poisson deviance 2[y log(y / mu) - (y - mu)], with y log y = 0 at y = 0
    """
    y, mu = np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float)
    return 2 * (xlogy(y, y) - xlogy(y, mu) - (y - mu))


def poisson_deviance(y_true, y_pred) -> float:
    return float(np.sum(poisson_unit_deviance(y_true, y_pred)))


def binomial_unit_deviance(y_true, y_pred, trials) -> np.ndarray:
    y, mu, n = (np.asarray(a, dtype=float) for a in (y_true, y_pred, trials))
    return 2 * (xlogy(y, y) - xlogy(y, mu) + xlogy(n - y, n - y) - xlogy(n - y, n - mu))


def negbin_unit_deviance(y_true, y_pred, theta: float) -> np.ndarray:
    y, mu = np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float)
    return 2 * (xlogy(y, y) - xlogy(y, mu) - (y + theta) * np.log((y + theta) / (mu + theta)))


def gamma_unit_deviance(y_true, y_pred) -> np.ndarray:
    y, mu = np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float)
    return 2 * (-np.log(y / mu) + (y - mu) / mu)


def tweedie_unit_deviance(y_true, y_pred, power: float) -> np.ndarray:
    y, mu = np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float)
    return 2 * (np.power(y, 2 - power) / ((1 - power) * (2 - power))
                - y * np.power(mu, 1 - power) / (1 - power)
                + np.power(mu, 2 - power) / (2 - power))
