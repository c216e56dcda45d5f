import json
import logging
import typing as tp
from pathlib import Path

import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from config import GeneralConfig, PathConfig, ValidationConfig
from .climate import climate_frame, compute_cell_indices, read_climate, write_extreme_indices
from .ingest import (build_panel, geometries_from_frame, aggregate_town_indices, aggregate_town_clay, read_panel,
                     write_panel, EXPOSURE_COLUMNS, CLAIMS_COLUMNS, INDEX_COLUMNS, CLAY_COLUMNS,
                     CAT_HISTORY_COLUMNS)
from .models import (BaseModel, FittedGlm, ZeroInflatedModel, build_design, compound_predict, compare_cost_models,
                     fit_cost_pipelines, load_model, model_spec, model_specs, power_scan, save_model)
from .models.cost import PREDICTION_COLUMNS as COMPOUND_COLUMNS
from .synthetic import GeneratorConfig, generate_climate, generate_panel
from .utils import RunManifest, read_frame, write_frame
from .utils.exceptions import InvalidParam, KeyMismatch
from .validation import (coefficient_evolution, read_cv_report, spatial_folds, temporal_folds, yearly_report)

logger = logging.getLogger(__name__)

GEOMETRY_COLUMNS = ['town_id', 'cell_id', 'weight']
REGION_COLUMNS = ['town_id', 'region']
PREDICT_COLUMNS = ['town_id', 'year', 'predicted', 'model_id']


class App:
    """Pipeline commands; every command writes its outputs and a manifest into one directory."""

    def __init__(self, workers: int = None, seed: int = None, config_path: tp.Union[str, Path] = None):
        self.workers = workers or GeneralConfig.WORKERS
        self.seed = GeneralConfig.SEED if seed is None else seed
        self.config_path = None if config_path is None else str(config_path)

    def _manifest(self, command: str, *inputs) -> RunManifest:
        manifest = RunManifest(command=command, config_path=self.config_path, seed=self.seed)
        for path in inputs:
            manifest.add_input(path)
        return manifest

    @staticmethod
    def save_frame(frame: pd.DataFrame, output_dir: tp.Union[str, Path], name: str, manifest: RunManifest) -> Path:
        path = write_frame(frame, Path(output_dir) / name)
        manifest.add_output(path)
        return path

    def cmd_indices(self, climate: tp.Union[str, Path], output_dir: tp.Union[str, Path] = None,
                    reference_years: tp.Tuple[int, int] = None, geometry: tp.Union[str, Path] = None,
                    clay: tp.Union[str, Path] = None, min_positive: int = None) -> tp.List[Path]:
        """
        Extreme yearly indices per cell, and per town when a cell-to-town geometry is given.
        :param clay: cell clay concentrations, aggregated to towns with the geometry
        """
        output_dir = Path(output_dir or PathConfig.INDICES_PATH)
        manifest = self._manifest('indices', climate, geometry, clay)
        series = read_climate(climate)
        per_cell = Parallel(n_jobs=self.workers)(delayed(compute_cell_indices)(s, reference_years, min_positive)
                                                 for s in tqdm(series, desc='cells'))
        records = [record for cell in per_cell for record in cell]
        paths = [write_extreme_indices(records, output_dir / 'cell_indices.csv')]
        if geometry is not None:
            geometries = geometries_from_frame(read_frame(geometry, GEOMETRY_COLUMNS))
            paths.append(write_extreme_indices(aggregate_town_indices(records, geometries),
                                               output_dir / 'indices.csv', id_column='town_id'))
            if clay is not None:
                town_clay = aggregate_town_clay(read_frame(clay, ['cell_id', 'clay']), geometries)
                paths.append(write_frame(town_clay, output_dir / 'clay.csv'))
        elif clay is not None:
            raise InvalidParam("Aggregating clay to towns needs the geometry file")
        for path in paths:
            manifest.add_output(path)
        manifest.write(output_dir)
        logger.info(f"Indices of {len(series)} cells written to {output_dir}")
        return paths

    def cmd_build_panel(self, exposure, claims, indices, clay, cat_history,
                        output_dir: tp.Union[str, Path] = None) -> Path:
        output_dir = Path(output_dir or PathConfig.PANEL_PATH)
        manifest = self._manifest('build-panel', exposure, claims, indices, clay, cat_history)
        panel = build_panel(read_frame(exposure, EXPOSURE_COLUMNS, 'exposure'),
                            read_frame(claims, CLAIMS_COLUMNS, 'claims'),
                            read_frame(indices, INDEX_COLUMNS, 'indices'),
                            read_frame(clay, CLAY_COLUMNS, 'clay'),
                            read_frame(cat_history, CAT_HISTORY_COLUMNS, 'cat history'))
        path = write_panel(panel, output_dir / 'panel.csv')
        manifest.add_output(path)
        manifest.write(output_dir)
        return path

    def cmd_fit(self, panel: tp.Union[str, Path], model: str, output_dir: tp.Union[str, Path] = None,
                last_year: int = None, scan_power: bool = False) -> Path:
        """
        Fit one named model and save it with its coefficient table.
        :param last_year: last training year, all years when omitted
        :param scan_power: with the tweedie model, also tabulate the AIC over the power grid
        """
        output_dir = Path(output_dir or PathConfig.MODELS_PATH)
        manifest = self._manifest('fit', panel)
        frame = read_panel(panel)
        if last_year is not None:
            frame = frame[frame['year'] <= last_year]
        spec = model_spec(model, seed=self.seed, workers=self.workers)
        fitted = spec.fit(frame)
        path = save_model(fitted, output_dir / f"{model}.model")
        manifest.add_output(path)
        if isinstance(fitted, (FittedGlm, ZeroInflatedModel)):
            self.save_frame(fitted.coefficient_table(), output_dir, f"{model}_coefficients.csv", manifest)
        if scan_power and model == 'tweedie':
            scan = power_scan(build_design(frame, fitted.covariates, response='cost'))
            self.save_frame(scan.table, output_dir, 'tweedie_power_scan.csv', manifest)
            logger.info(f"Lowest tweedie AIC at power {scan.best_power}")
        manifest.write(output_dir)
        logger.info(f"Saved {fitted.model_id} to {path}")
        return path

    @staticmethod
    def predict_frame(model: BaseModel, rows: pd.DataFrame) -> pd.DataFrame:
        predicted = model.predict(rows, rows['exposure'].to_numpy(dtype=float))
        frame = pd.DataFrame({'town_id': rows['town_id'].to_numpy(), 'year': rows['year'].to_numpy(),
                              'predicted': predicted, 'model_id': model.model_id})
        return frame.sort_values(['town_id', 'year'], kind='mergesort').reset_index(drop=True)

    def cmd_predict(self, model: tp.Union[str, Path], panel: tp.Union[str, Path], year: int,
                    output_dir: tp.Union[str, Path] = None, severity: tp.Union[str, Path] = None) -> Path:
        """
        Predictions of one panel year. With a severity model the frequency model's counts are compounded
        into total costs.
        """
        output_dir = Path(output_dir or PathConfig.PREDICTIONS_PATH)
        manifest = self._manifest('predict', model, panel, severity)
        rows = read_panel(panel)
        rows = rows[rows['year'] == year]
        if rows.empty:
            raise KeyMismatch(f"Panel has no row for year {year}")
        fitted = load_model(model)
        if severity is not None:
            frame = compound_predict(fitted, load_model(severity), rows)[COMPOUND_COLUMNS]
            frame = frame.sort_values(['town_id', 'year'], kind='mergesort').reset_index(drop=True)
            path = self.save_frame(frame, output_dir, f"compound_{year}.csv", manifest)
        else:
            path = self.save_frame(self.predict_frame(fitted, rows)[PREDICT_COLUMNS], output_dir,
                                   f"predictions_{year}.csv", manifest)
        manifest.write(output_dir)
        return path

    def cmd_cv(self, panel: tp.Union[str, Path], models: tp.Sequence[str], output_dir: tp.Union[str, Path] = None,
               first_test_year: int = None, last_test_year: int = None, regions: tp.Union[str, Path] = None,
               k: int = None, evolution: str = None) -> tp.List[Path]:
        """
        Leave-future-out report of the named models, plus a spatial k-fold report when regions are given.
        :param evolution: GLM family whose coefficients are refitted on every training window
        """
        output_dir = Path(output_dir or PathConfig.CV_PATH)
        manifest = self._manifest('cv', panel, regions)
        frame = read_panel(panel)
        first = ValidationConfig.FIRST_TEST_YEAR if first_test_year is None else first_test_year
        last = ValidationConfig.LAST_TEST_YEAR if last_test_year is None else last_test_year
        specs = model_specs(models, seed=self.seed, workers=1)
        folds = temporal_folds(frame, first, last)
        paths = yearly_report(specs, folds, frame, workers=self.workers).to_csv(output_dir)

        if regions is not None:
            assignment = read_frame(regions, REGION_COLUMNS, 'regions')
            k = ValidationConfig.SPATIAL_FOLDS if k is None else k
            spatial = spatial_folds(frame, assignment, k)
            paths += yearly_report(specs, spatial, frame, regions=assignment,
                                   workers=self.workers).to_csv(output_dir / 'spatial')
        if evolution is not None:
            table = coefficient_evolution(frame, folds, evolution)
            paths.append(write_frame(table, output_dir / f"{evolution}_coefficient_evolution.csv"))
        for path in paths:
            manifest.add_output(path)
        manifest.write(output_dir)
        return paths

    def cmd_synth(self, output_dir: tp.Union[str, Path] = None, **overrides) -> tp.List[Path]:
        """Synthetic panel, raw inputs, truth and a monthly climate file; `overrides` are `GeneratorConfig` fields."""
        output_dir = Path(output_dir or PathConfig.SYNTH_PATH)
        manifest = self._manifest('synth')
        config = GeneratorConfig(seed=self.seed, **{k: v for k, v in overrides.items() if v is not None})
        paths = generate_panel(config, self.workers).write(output_dir)
        climate = generate_climate(last_year=config.last_year, seed=config.seed)
        paths.append(write_frame(climate_frame(climate), output_dir / "climate.csv"))
        for path in paths:
            manifest.add_output(path)
        manifest.write(output_dir)
        return paths

    @staticmethod
    def map_features(values: pd.DataFrame) -> tp.Dict[str, tp.Any]:
        """FeatureCollection without geometry; shapes are joined on town_id by the mapping tool."""
        return {'type': 'FeatureCollection',
                'features': [{'type': 'Feature', 'geometry': None,
                              'properties': {'town_id': town, 'value': None if pd.isna(value) else float(value)}}
                             for town, value in values[['town_id', 'value']].itertuples(index=False)]}

    def cmd_map(self, predictions: tp.Union[str, Path], output_dir: tp.Union[str, Path] = None,
                value: str = None) -> tp.List[Path]:
        """
        (town_id, value) pairs per model and year from a prediction file of `predict` or `cv`.
        :param value: column to export, 'predicted' or else 'predicted_total' by default; 'observed' maps the data
        """
        output_dir = Path(output_dir or PathConfig.MAPS_PATH)
        manifest = self._manifest('map', predictions)
        frame = read_frame(predictions, ['town_id', 'year'], 'predictions')
        value = value or ('predicted' if 'predicted' in frame else 'predicted_total')
        if value not in frame:
            raise KeyMismatch(f"Prediction file has no column '{value}'")
        if 'model' not in frame:
            frame['model'] = frame['model_id'] if 'model_id' in frame else frame['severity_model_id']
        paths = []
        for (model, year), group in frame.groupby(['model', 'year'], sort=True):
            values = group[['town_id', value]].rename(columns={value: 'value'})
            values = values.sort_values('town_id', kind='mergesort').reset_index(drop=True)
            stem = f"map_{model}_{value}_{year}"
            paths.append(self.save_frame(values, output_dir, f"{stem}.csv", manifest))
            geojson = output_dir / f"{stem}.geojson"
            with open(geojson, 'w', newline='\n') as f:
                json.dump(self.map_features(values), f, sort_keys=True)
            manifest.add_output(geojson)
            paths.append(geojson)
        manifest.write(output_dir)
        return paths

    def cmd_report(self, cv_dir: tp.Union[str, Path], output_dir: tp.Union[str, Path] = None,
                   panel: tp.Union[str, Path] = None, cost_year: int = None) -> tp.List[Path]:
        """
        Model ranking from a cv directory; with a panel and a year, the compared total-cost methods as well.
        """
        output_dir = Path(output_dir or PathConfig.REPORT_PATH)
        cv_dir = Path(cv_dir)
        manifest = self._manifest('report', cv_dir / 'folds.csv', cv_dir / 'predictions.csv', panel)
        report = read_cv_report(cv_dir)
        paths = [self.save_frame(report.ranking(), output_dir, 'ranking.csv', manifest),
                 self.save_frame(report.national, output_dir, 'national.csv', manifest)]
        if cost_year is not None:
            if panel is None:
                raise InvalidParam("Comparing cost methods needs the panel")
            frame = read_panel(panel)
            comparison = compare_cost_models(frame, cost_year, fit_cost_pipelines(frame, cost_year, self.seed))
            paths.append(self.save_frame(comparison.totals, output_dir, 'cost_totals.csv', manifest))
            paths.append(self.save_frame(comparison.per_town, output_dir, 'cost_per_town.csv', manifest))
        best = report.ranking().iloc[0]['model'] if len(report.folds) else None
        logger.info(f"Best model by {ValidationConfig.COUNT_METRIC}: {best}")
        manifest.write(output_dir)
        return paths
