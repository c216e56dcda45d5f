import logging
import typing as tp
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed
from scipy import stats
from tqdm import tqdm

from config import CostConfig, GeneralConfig, PathConfig, ValidationConfig
from src.models import metrics
from src.models.base_model import BaseModel
from src.models.design import build_design
from src.models.glm import fit_glm
from src.models.registry import ModelSpec
from src.utils.exceptions import InsufficientHistory, QuasiLikelihoodOnly
from src.utils.io import format_float, read_frame, write_frame
from .folds import CvFold, Regions
from .scoring import prune, rmse, select_threshold

logger = logging.getLogger(__name__)

FOLD_COLUMNS = ['model', 'model_id', 'fold', 'training_start', 'training_end', 'test_year', 'holdout',
                'short_history', 'n_train', 'n_test', 'aic', 'bic', 'rmse', 'deviance', 'predicted_total',
                'observed_total', 'predicted_share', 'observed_share', 'prune_threshold', 'pruned_total',
                'pruned_rmse', 'pruned_change']
PREDICTION_COLUMNS = ['model', 'fold', 'town_id', 'year', 'predicted', 'observed']
METRICS = ['aic', 'bic', 'rmse', 'deviance']


def _criteria(model: BaseModel) -> tp.Tuple[float, float]:
    try:
        return float(getattr(model, 'aic', np.nan)), float(getattr(model, 'bic', np.nan))
    except QuasiLikelihoodOnly:
        return np.nan, np.nan


def _deviance(target: str, model: BaseModel, observed: np.ndarray, predicted: np.ndarray) -> float:
    if observed.size == 0:
        return np.nan
    with np.errstate(divide='ignore', invalid='ignore'):
        if target == 'claims':
            return metrics.poisson_deviance(observed, predicted)
        if target == 'severity':
            return float(np.sum(metrics.gamma_unit_deviance(observed, predicted)))
        power = getattr(model, 'tweedie_power', None) or CostConfig.TWEEDIE_POWER
        return float(np.sum(metrics.tweedie_unit_deviance(observed, predicted, power)))


def _test_rows(target: str, test: pd.DataFrame) -> tp.Tuple[pd.DataFrame, np.ndarray]:
    if target == 'severity':
        rows = test[test['claims'] > 0]
        return rows, rows['cost_cents'].to_numpy(dtype=float) / 100.0 / rows['claims'].to_numpy(dtype=float)
    rows = test[test['exposure'] > 0]
    if target == 'cost':
        return rows, rows['cost_cents'].to_numpy(dtype=float) / 100.0
    return rows, rows['claims'].to_numpy(dtype=float)


def evaluate_fold(spec: ModelSpec, fold: CvFold, panel: pd.DataFrame,
                  regions: Regions = None) -> tp.Tuple[tp.Dict[str, tp.Any], pd.DataFrame]:
    """
    Fit one model on the training part of a fold and score it on the test part.
    Information criteria come from the training fit, RMSE and deviance from the test rows only.
    """
    train, test = fold.split(panel, regions)
    model = spec.fit(train)
    aic, bic = _criteria(model)
    rows, observed = _test_rows(spec.target, test)
    if spec.target == 'severity':
        predicted = model.predict(rows)
        claims = rows['claims'].to_numpy(dtype=float)
        predicted_total, observed_total = float(np.sum(predicted * claims)), float(np.sum(observed * claims))
    else:
        predicted = model.predict(rows, rows['exposure'].to_numpy(dtype=float))
        predicted_total, observed_total = float(np.sum(predicted)), float(np.sum(observed))

    row = {'model': spec.name, 'model_id': model.model_id, 'fold': fold.name,
           'training_start': fold.training_years[0], 'training_end': fold.training_years[-1],
           'test_year': fold.test_year if fold.test_year is not None else np.nan,
           'holdout': '+'.join(sorted(fold.holdout_regions)), 'short_history': fold.short_history,
           'n_train': len(train), 'n_test': len(rows), 'aic': aic, 'bic': bic, 'rmse': rmse(predicted, observed),
           'deviance': _deviance(spec.target, model, observed, predicted),
           'predicted_total': predicted_total, 'observed_total': observed_total}
    predictions = pd.DataFrame({'model': spec.name, 'fold': fold.name, 'town_id': rows['town_id'].to_numpy(),
                                'year': rows['year'].to_numpy(), 'predicted': predicted, 'observed': observed})
    logger.info(f"{spec.name} on fold {fold.name}: rmse {row['rmse']:.6g}, deviance {row['deviance']:.6g}")
    return row, predictions


def _add_pruning(folds: pd.DataFrame, predictions: pd.DataFrame, targets: tp.Mapping[str, str],
                 grid: tp.Sequence[float]) -> pd.DataFrame:
    """Temporal count folds prune with the threshold selected on the previous fold of the same model."""
    folds = folds.copy()
    for column in ['prune_threshold', 'pruned_total', 'pruned_rmse', 'pruned_change']:
        folds[column] = np.nan
    by_fold = {key: group for key, group in predictions.groupby(['model', 'fold'], sort=False)}
    for model, group in folds.groupby('model', sort=False):
        if targets[model] != 'claims':
            continue
        temporal = group[group['holdout'] == ''].sort_values('test_year')
        previous = None
        for index, row in temporal.iterrows():
            current = by_fold.get((model, row['fold']))
            if previous is not None and current is not None and len(previous):
                threshold, _ = select_threshold((previous['predicted'].to_numpy(), previous['observed'].to_numpy()),
                                                grid)
                pruned = prune(current['predicted'].to_numpy(), threshold)
                total = float(np.sum(pruned))
                folds.loc[index, 'prune_threshold'] = threshold
                folds.loc[index, 'pruned_total'] = total
                folds.loc[index, 'pruned_rmse'] = rmse(pruned, current['observed'].to_numpy())
                before = row['predicted_total']
                folds.loc[index, 'pruned_change'] = (total - before) / before if before else 0.0
            previous = current
    return folds


@dataclass(frozen=True)
class CvReport:
    """Per-fold metrics and per-row test predictions of every model."""
    folds: pd.DataFrame
    predictions: pd.DataFrame

    @property
    def aggregate(self) -> pd.DataFrame:
        """Fold means of the metrics with the RMSE of the national totals across folds."""
        grouped = self.folds.groupby('model', sort=True)
        table = grouped[METRICS].mean()
        table['n_folds'] = grouped.size()
        table['national_rmse'] = grouped.apply(lambda g: rmse(g['predicted_total'].to_numpy(),
                                                              g['observed_total'].to_numpy()))
        return table.reset_index()

    @property
    def national(self) -> pd.DataFrame:
        """Yearly predicted and observed totals per model, absolute and as shares of the observed sum."""
        columns = ['model', 'fold', 'test_year', 'predicted_total', 'observed_total', 'predicted_share',
                   'observed_share', 'pruned_total']
        return self.folds[columns].copy()

    def ranking(self, metric: str = None) -> pd.DataFrame:
        metric = metric or ValidationConfig.COUNT_METRIC
        return self.aggregate.sort_values([metric, 'model'], kind='mergesort').reset_index(drop=True)

    def summary(self) -> tp.Dict[str, tp.Any]:
        def number(value):
            return None if pd.isna(value) else float(format_float(value))

        aggregate = self.aggregate
        return {
            'artifact_version': GeneralConfig.ARTIFACT_VERSION,
            'n_folds': int(self.folds['fold'].nunique()),
            'models': {row['model']: {**{m: number(row[m]) for m in METRICS + ['national_rmse']},
                                      'n_folds': int(row['n_folds'])}
                       for row in aggregate.to_dict('records')},
            'best_by_aic': _best(aggregate, 'aic'),
            f"best_by_{ValidationConfig.COUNT_METRIC}": _best(aggregate, ValidationConfig.COUNT_METRIC),
        }

    def to_csv(self, output_dir: tp.Union[str, Path]) -> tp.List[Path]:
        output_dir = Path(output_dir)
        PathConfig.mkdir(output_dir)
        paths = [write_frame(self.folds, output_dir / 'folds.csv'),
                 write_frame(self.aggregate, output_dir / 'aggregate.csv'),
                 write_frame(self.national, output_dir / 'national.csv'),
                 write_frame(self.predictions, output_dir / 'predictions.csv')]
        summary_path = output_dir / 'summary.yaml'
        with open(summary_path, 'w', newline='\n') as f:
            yaml.safe_dump(self.summary(), f, sort_keys=False)
        return paths + [summary_path]


def _best(aggregate: pd.DataFrame, metric: str) -> tp.Optional[str]:
    scored = aggregate.dropna(subset=[metric])
    if scored.empty:
        return None
    return str(scored.sort_values([metric, 'model'], kind='mergesort').iloc[0]['model'])


def read_cv_report(input_dir: tp.Union[str, Path]) -> CvReport:
    input_dir = Path(input_dir)
    folds = read_frame(input_dir / 'folds.csv', FOLD_COLUMNS)
    folds['holdout'] = folds['holdout'].fillna('').astype(str)
    predictions = read_frame(input_dir / 'predictions.csv', PREDICTION_COLUMNS)
    return CvReport(folds=folds[FOLD_COLUMNS], predictions=predictions[PREDICTION_COLUMNS])


def yearly_report(specs: tp.Mapping[str, ModelSpec], folds: tp.Sequence[CvFold], panel: pd.DataFrame,
                  regions: Regions = None, workers: int = None, prune_grid: tp.Sequence[float] = None) -> CvReport:
    """
    Fit every model on every fold and tabulate test metrics with national totals.
    Folds run in parallel; rows are assembled in model then fold order.
    """
    workers = workers or GeneralConfig.WORKERS
    tasks = [(spec, fold) for spec in specs.values() for fold in folds]
    results = Parallel(n_jobs=workers)(delayed(evaluate_fold)(spec, fold, panel, regions)
                                       for spec, fold in tqdm(tasks, desc='cv folds'))
    table = pd.DataFrame([row for row, _ in results], columns=FOLD_COLUMNS[:16])
    predictions = pd.concat([p for _, p in results], ignore_index=True) if results \
        else pd.DataFrame(columns=PREDICTION_COLUMNS)

    grand = table.groupby('model')['observed_total'].transform('sum')
    with np.errstate(divide='ignore', invalid='ignore'):
        table['predicted_share'] = table['predicted_total'] / grand
        table['observed_share'] = table['observed_total'] / grand
    table = _add_pruning(table, predictions, {name: spec.target for name, spec in specs.items()},
                         ValidationConfig.PRUNE_GRID if prune_grid is None else prune_grid)
    return CvReport(folds=table[FOLD_COLUMNS], predictions=predictions[PREDICTION_COLUMNS])


def coefficient_evolution(panel: pd.DataFrame, folds: tp.Sequence[CvFold], family: str = 'poisson',
                          covariates: tp.Sequence[str] = None) -> pd.DataFrame:
    """GLM coefficients with standard errors refitted on the training years of every fold."""
    tables = []
    for fold in tqdm(folds, desc=f"{family} evolution"):
        train, _ = fold.split(panel)
        table = fit_glm(build_design(train, covariates), family).coefficient_table()
        table.insert(0, 'training_end', fold.training_years[-1])
        tables.append(table)
    return pd.concat(tables, ignore_index=True) if tables \
        else pd.DataFrame(columns=['training_end', 'term', 'estimate', 'std_error'])


@dataclass(frozen=True)
class CoefficientTrend:
    term: str
    slope: float
    intercept: float
    r_value: float
    p_value: float

    def significant(self, level: float = 0.05) -> bool:
        return self.p_value < level


def coefficient_trend(evolution: pd.DataFrame, term: str) -> CoefficientTrend:
    """Least-squares trend of one coefficient across training windows."""
    rows = evolution[evolution['term'] == term].sort_values('training_end')
    if len(rows) < 3:
        raise InsufficientHistory(f"A trend of '{term}' needs at least 3 windows, got {len(rows)}")
    fit = stats.linregress(rows['training_end'].to_numpy(dtype=float), rows['estimate'].to_numpy(dtype=float))
    return CoefficientTrend(term=term, slope=float(fit.slope), intercept=float(fit.intercept),
                            r_value=float(fit.rvalue), p_value=float(fit.pvalue))
