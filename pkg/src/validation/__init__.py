from .folds import CvFold, temporal_folds, spatial_folds, region_mapping
from .scoring import rmse, prune, PruneResult, prune_low_predictions, select_threshold
from .report import (CvReport, CoefficientTrend, evaluate_fold, yearly_report, read_cv_report, coefficient_evolution,
                     coefficient_trend)
