import logging
import typing as tp
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from config import IndexConfig
from src.utils.exceptions import EmptySeries, ReferencePeriodError, MissingStandardizer, DegenerateSample
from src.utils.io import read_frame, write_frame
from .series import (ClimateVariable, Season, GridMonthlySeries, WindowedSeries, SeasonalIndex,
                     SeasonalIndexSeries, ExtremeYearIndex, CLIMATE_COLUMNS, extreme_frame)
from .standardizer import GammaStandardizer, fit_standardizer, standardize

logger = logging.getLogger(__name__)

CellStandardizers = tp.Dict[ClimateVariable, tp.Dict[int, GammaStandardizer]]


def rolling_3month(series: GridMonthlySeries, variable: ClimateVariable, window: int = None) -> WindowedSeries:
    """
    Aggregate each month with its predecessors: sums for precipitation, means for the state variables.
    A window is produced only when all its months are present; interior gaps are reported in `skipped`.
    """
    window = window or IndexConfig.WINDOW
    values = series.values(variable)
    present = np.isfinite(values)
    if not present.any():
        raise EmptySeries(f"Cell {series.cell_id}: no {variable.value} observation")

    index = series.month_index[present]
    start = index.min()
    dense = np.full(index.max() - start + 1, np.nan)
    dense[index - start] = values[present]

    if dense.size < window:
        stacked = np.empty((0, window))
    else:
        stacked = sliding_window_view(dense, window)
    aggregate = stacked.sum(axis=1) if variable.is_cumulative else stacked.mean(axis=1)
    ends = np.arange(window - 1, dense.size)
    complete = np.isfinite(aggregate)

    ending_present = np.isfinite(dense[ends])
    skipped_positions = ends[ending_present & ~complete] + start
    skipped = [(int(i // 12), int(i % 12) + 1) for i in skipped_positions]
    if skipped:
        logger.warning(f"Cell {series.cell_id}: {len(skipped)} {variable.value} windows skipped over gaps")

    month_index = ends[complete] + start
    return WindowedSeries(variable=variable, years=month_index // 12, months=month_index % 12 + 1,
                          values=aggregate[complete], skipped=skipped)


def fit_cell_standardizers(series: GridMonthlySeries, reference_years: tp.Tuple[int, int] = None,
                           min_positive: int = None) -> CellStandardizers:
    """
    One standardizer per (variable, calendar month), calibrated on the windows ending in the reference period.
    Months whose sample cannot be fitted are left out and reported by `seasonal_index`.
    """
    reference_years = reference_years or (series.first_year, series.last_year)
    if series.first_year > reference_years[0] or series.last_year < reference_years[1]:
        raise ReferencePeriodError(f"Cell {series.cell_id} covers {series.first_year}-{series.last_year}, "
                                   f"reference period is {reference_years[0]}-{reference_years[1]}")

    standardizers: CellStandardizers = {}
    for variable in ClimateVariable:
        windows = rolling_3month(series, variable)
        in_reference = (windows.years >= reference_years[0]) & (windows.years <= reference_years[1])
        standardizers[variable] = {}
        for month in range(1, 13):
            sample = windows.values[in_reference & (windows.months == month)]
            if sample.size == 0:
                continue
            location = 0.0
            if variable is ClimateVariable.soil_temp:
                # kelvin-scale data is moved onto the positive half-line before the gamma fit
                location = float(sample.min() - IndexConfig.TEMPERATURE_SHIFT)
            try:
                standardizers[variable][month] = fit_standardizer(sample, month, reference_years, location,
                                                                  min_positive)
            except DegenerateSample as e:
                logger.warning(f"Cell {series.cell_id}: {variable.value} month {month} not calibrated: {e}")
    return standardizers


def seasonal_index(series: GridMonthlySeries, standardizers: CellStandardizers) -> SeasonalIndexSeries:
    """Standardized value of the window ending in the last month of each season."""
    for variable in ClimateVariable:
        missing = [m for m in range(1, 13) if m not in standardizers.get(variable, {})]
        if missing:
            raise MissingStandardizer(f"Cell {series.cell_id}: no {variable.value} standardizer for months {missing}")

    standardized: tp.Dict[ClimateVariable, tp.Dict[tp.Tuple[int, int], float]] = {}
    for variable in ClimateVariable:
        windows = rolling_3month(series, variable)
        values = {}
        for season in Season:
            selected = windows.months == season.end_month
            z = standardize(windows.values[selected], standardizers[variable][season.end_month])
            values.update({(int(y), season.end_month): float(v) for y, v in zip(windows.years[selected], z)})
        standardized[variable] = values

    entries = []
    for key in sorted(standardized[ClimateVariable.precip]):
        if key in standardized[ClimateVariable.soil_water] and key in standardized[ClimateVariable.soil_temp]:
            entries.append(SeasonalIndex(year=key[0], season=Season.from_end_month(key[1]),
                                         spi=standardized[ClimateVariable.precip][key],
                                         sswi=standardized[ClimateVariable.soil_water][key],
                                         ssti=standardized[ClimateVariable.soil_temp][key]))
    return SeasonalIndexSeries(cell_id=series.cell_id, entries=entries)


def extreme_year_index(seasonal: SeasonalIndexSeries) -> tp.List[ExtremeYearIndex]:
    """Yearly minimum of SPI and SSWI and maximum of SSTI over the four seasons; partial years are skipped."""
    by_year: tp.Dict[int, tp.List[SeasonalIndex]] = defaultdict(list)
    for entry in seasonal.entries:
        by_year[entry.year].append(entry)

    extremes = []
    for year in sorted(by_year):
        entries = by_year[year]
        if {e.season for e in entries} != set(Season):
            logger.warning(f"Cell {seasonal.cell_id}: year {year} has {len(entries)} seasons, skipped")
            continue
        extremes.append(ExtremeYearIndex(id=seasonal.cell_id, year=year,
                                         espi=min(e.spi for e in entries),
                                         esswi=min(e.sswi for e in entries),
                                         essti=max(e.ssti for e in entries)))
    return extremes


def incomplete_years(seasonal: SeasonalIndexSeries) -> tp.List[int]:
    seasons = defaultdict(set)
    for entry in seasonal.entries:
        seasons[entry.year].add(entry.season)
    return sorted(year for year, found in seasons.items() if found != set(Season))


def compute_cell_indices(series: GridMonthlySeries, reference_years: tp.Tuple[int, int] = None,
                         min_positive: int = None) -> tp.List[ExtremeYearIndex]:
    standardizers = fit_cell_standardizers(series, reference_years, min_positive)
    return extreme_year_index(seasonal_index(series, standardizers))


def read_climate(path: tp.Union[str, Path]) -> tp.List[GridMonthlySeries]:
    frame = read_frame(path, CLIMATE_COLUMNS, source='climate')
    return [GridMonthlySeries.from_frame(cell) for _, cell in frame.groupby('cell_id', sort=True)]


def write_extreme_indices(records: tp.Iterable[ExtremeYearIndex], path: tp.Union[str, Path],
                          id_column: str = 'cell_id') -> Path:
    return write_frame(extreme_frame(records, id_column), path)


def climate_frame(series: tp.Iterable[GridMonthlySeries]) -> pd.DataFrame:
    frames = [pd.DataFrame({'cell_id': s.cell_id, 'latitude': s.latitude, 'longitude': s.longitude,
                            'year': s.years, 'month': s.months, 'precipitation': s.precipitation,
                            'soil_water': s.soil_water, 'soil_temperature': s.soil_temperature})
              for s in series]
    return pd.concat(frames, ignore_index=True)[CLIMATE_COLUMNS]
