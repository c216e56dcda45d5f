from __future__ import annotations

import typing as tp
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from src.utils.exceptions import EmptySeries

CLIMATE_COLUMNS = ['cell_id', 'latitude', 'longitude', 'year', 'month',
                   'precipitation', 'soil_water', 'soil_temperature']


class ClimateVariable(str, Enum):
    precip = 'precipitation'
    soil_water = 'soil_water'
    soil_temp = 'soil_temperature'

    @property
    def is_cumulative(self) -> bool:
        # Precipitation windows are sums, state variables are averaged
        return self is ClimateVariable.precip


class Season(str, Enum):
    Winter = 'Winter'
    Spring = 'Spring'
    Summer = 'Summer'
    Autumn = 'Autumn'

    @property
    def end_month(self) -> int:
        return {Season.Winter: 2, Season.Spring: 5, Season.Summer: 8, Season.Autumn: 11}[self]

    @staticmethod
    def from_end_month(month: int) -> tp.Optional[Season]:
        return {season.end_month: season for season in Season}.get(month)


@dataclass(frozen=True)
class GridMonthlySeries:
    cell_id: str
    latitude: float
    longitude: float
    years: np.ndarray
    months: np.ndarray
    precipitation: np.ndarray
    soil_water: np.ndarray
    soil_temperature: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, name)) for name in
                  ('years', 'months', 'precipitation', 'soil_water', 'soil_temperature')]
        if len({len(a) for a in arrays}) != 1:
            raise ValueError(f"Cell {self.cell_id}: climate arrays have different lengths")
        if len(arrays[0]) == 0:
            raise EmptySeries(f"Cell {self.cell_id} has no monthly observations")
        if np.any((arrays[1] < 1) | (arrays[1] > 12)):
            raise ValueError(f"Cell {self.cell_id}: month outside 1..12")
        if np.any(np.diff(self.month_index) <= 0):
            raise ValueError(f"Cell {self.cell_id}: months must be strictly increasing without duplicates")
        precipitation, soil_water = arrays[2], arrays[3]
        if np.any(precipitation[np.isfinite(precipitation)] < 0):
            raise ValueError(f"Cell {self.cell_id}: negative precipitation")
        finite_water = soil_water[np.isfinite(soil_water)]
        if np.any((finite_water < 0) | (finite_water > 1)):
            raise ValueError(f"Cell {self.cell_id}: soil water outside [0, 1]")

    @property
    def month_index(self) -> np.ndarray:
        return np.asarray(self.years, dtype=int) * 12 + np.asarray(self.months, dtype=int) - 1

    @property
    def first_year(self) -> int:
        return int(np.min(self.years))

    @property
    def last_year(self) -> int:
        return int(np.max(self.years))

    def values(self, variable: ClimateVariable) -> np.ndarray:
        return np.asarray(getattr(self, variable.value), dtype=float)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> GridMonthlySeries:
        frame = frame.sort_values(['year', 'month'])
        return cls(
            cell_id=str(frame['cell_id'].iloc[0]),
            latitude=float(frame['latitude'].iloc[0]),
            longitude=float(frame['longitude'].iloc[0]),
            years=frame['year'].to_numpy(dtype=int),
            months=frame['month'].to_numpy(dtype=int),
            precipitation=frame['precipitation'].to_numpy(dtype=float),
            soil_water=frame['soil_water'].to_numpy(dtype=float),
            soil_temperature=frame['soil_temperature'].to_numpy(dtype=float),
        )


@dataclass(frozen=True)
class WindowedSeries:
    """3-month aggregates indexed by the month ending each window."""
    variable: ClimateVariable
    years: np.ndarray
    months: np.ndarray
    values: np.ndarray
    skipped: tp.List[tp.Tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class SeasonalIndex:
    year: int
    season: Season
    spi: float
    sswi: float
    ssti: float


@dataclass(frozen=True)
class SeasonalIndexSeries:
    cell_id: str
    entries: tp.List[SeasonalIndex]


@dataclass(frozen=True)
class ExtremeYearIndex:
    id: str
    year: int
    espi: float
    esswi: float
    essti: float


def extreme_frame(records: tp.Iterable[ExtremeYearIndex], id_column: str = 'cell_id') -> pd.DataFrame:
    frame = pd.DataFrame([(r.id, r.year, r.espi, r.esswi, r.essti) for r in records],
                         columns=[id_column, 'year', 'espi', 'esswi', 'essti'])
    return frame.sort_values([id_column, 'year'], kind='mergesort').reset_index(drop=True)