import logging
import typing as tp
from dataclasses import dataclass

import numpy as np
import pandas as pd

from config import ValidationConfig
from src.utils.exceptions import KeyMismatch, NoValidationFold

logger = logging.getLogger(__name__)

Values = tp.Union[pd.Series, np.ndarray, tp.Sequence[float]]


def _aligned(predictions: Values, observations: Values) -> tp.Tuple[np.ndarray, np.ndarray]:
    """Series are matched on their index, plain sequences by position."""
    if isinstance(predictions, pd.Series) and isinstance(observations, pd.Series):
        if predictions.index.has_duplicates or observations.index.has_duplicates:
            raise KeyMismatch("Prediction and observation keys must be unique")
        if set(predictions.index) != set(observations.index):
            extra = len(predictions.index.difference(observations.index))
            missing = len(observations.index.difference(predictions.index))
            raise KeyMismatch(f"{extra} predictions without observation, {missing} observations without prediction")
        observations = observations.reindex(predictions.index)
    predicted = np.asarray(predictions, dtype=float)
    observed = np.asarray(observations, dtype=float)
    if predicted.shape != observed.shape:
        raise KeyMismatch(f"{predicted.size} predictions for {observed.size} observations")
    return predicted, observed


def rmse(predictions: Values, observations: Values) -> float:
    predicted, observed = _aligned(predictions, observations)
    if predicted.size == 0:
        return float('nan')
    return float(np.sqrt(np.mean((predicted - observed) ** 2)))


def prune(predictions: Values, threshold: float):
    """Predictions below `threshold` set to zero."""
    if isinstance(predictions, pd.Series):
        return predictions.where(predictions >= threshold, 0.0)
    predictions = np.asarray(predictions, dtype=float)
    return np.where(predictions >= threshold, predictions, 0.0)


@dataclass(frozen=True)
class PruneResult:
    predictions: Values
    threshold: float
    grid_rmse: pd.DataFrame
    total_before: float
    total_after: float

    @property
    def relative_change(self) -> float:
        if self.total_before == 0:
            return 0.0
        return (self.total_after - self.total_before) / self.total_before


def select_threshold(validation: tp.Tuple[Values, Values], grid: tp.Sequence[float] = None
                     ) -> tp.Tuple[float, pd.DataFrame]:
    """Grid value with the lowest validation RMSE after pruning; ties go to the smallest value."""
    grid = sorted(ValidationConfig.PRUNE_GRID if grid is None else grid)
    predicted, observed = _aligned(*validation)
    scores = [rmse(prune(predicted, tau), observed) for tau in grid]
    best = int(np.argmin(scores))
    return float(grid[best]), pd.DataFrame({'threshold': grid, 'rmse': scores})


def prune_low_predictions(predictions: Values, validation: tp.Optional[tp.Tuple[Values, Values]],
                          grid: tp.Sequence[float] = None) -> PruneResult:
    """
    Zero the very low predictions, with the threshold tuned on a held-out fold.
    :param validation: (predictions, observations) of the fold that selects the threshold
    :param grid: candidate thresholds in expected claims
    """
    if validation is None:
        raise NoValidationFold("Pruning needs held-out predictions and observations to choose the threshold")
    threshold, table = select_threshold(validation, grid)
    pruned = prune(predictions, threshold)
    before, after = float(np.sum(predictions)), float(np.sum(pruned))
    result = PruneResult(predictions=pruned, threshold=threshold, grid_rmse=table, total_before=before,
                         total_after=after)
    logger.info(f"Pruning below {threshold:g} changes the total from {before:.6g} to {after:.6g}")
    return result
