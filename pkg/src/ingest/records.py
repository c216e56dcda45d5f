from __future__ import annotations

import typing as tp
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.utils.exceptions import InvalidGeometry

PANEL_COLUMNS = ['town_id', 'year', 'exposure', 'claims', 'cost_cents', 'sums_insured_cents',
                 'espi', 'esswi', 'essti', 'clay', 'cat']
PANEL_DTYPES = {'town_id': str, 'year': int, 'exposure': int, 'claims': int, 'cost_cents': 'int64',
                'sums_insured_cents': 'int64', 'espi': float, 'esswi': float, 'essti': float,
                'clay': float, 'cat': int}


def to_cents(amount: tp.Union[float, pd.Series, np.ndarray]):
    return np.round(np.asarray(amount, dtype=float) * 100).astype('int64')


def from_cents(cents: tp.Union[int, pd.Series, np.ndarray]):
    return np.asarray(cents, dtype='int64') / 100.0


@dataclass(frozen=True)
class TownYearRecord:
    town_id: str
    year: int
    exposure: int
    claims: int
    cost_cents: int
    sums_insured_cents: int
    espi: float
    esswi: float
    essti: float
    clay: float
    cat: int

    @property
    def cost(self) -> float:
        return self.cost_cents / 100.0

    def violations(self) -> tp.List[str]:
        found = []
        if min(self.exposure, self.claims, self.cost_cents, self.sums_insured_cents) < 0:
            found.append("negative count or amount")
        if self.claims == 0 and self.cost_cents != 0:
            found.append("cost without claims")
        if self.exposure == 0 and self.claims != 0:
            found.append("claims without exposure")
        if not all(np.isfinite([self.espi, self.esswi, self.essti, self.clay])):
            found.append("missing covariate")
        elif not 0 <= self.clay <= 100:
            found.append("clay outside [0, 100]")
        if self.cat not in (0, 1):
            found.append("cat flag not binary")
        return found


def panel_records(frame: pd.DataFrame) -> tp.List[TownYearRecord]:
    return [TownYearRecord(**{column: row[column] for column in PANEL_COLUMNS}) for row in frame.to_dict('records')]


@dataclass(frozen=True)
class TownGeometry:
    town_id: str
    weights: tp.Dict[str, float]

    def __post_init__(self):
        if not self.weights:
            raise InvalidGeometry(f"Town {self.town_id} has no member cell")
        values = np.array(list(self.weights.values()), dtype=float)
        if np.any((values < 0) | (values > 1)):
            raise InvalidGeometry(f"Town {self.town_id}: cell weights must lie in [0, 1]")
        if abs(values.sum() - 1.0) > 1e-9:
            raise InvalidGeometry(f"Town {self.town_id}: cell weights sum to {values.sum()}, expected 1")

    @property
    def cells(self) -> tp.List[str]:
        return list(self.weights)


def geometries_from_frame(frame: pd.DataFrame) -> tp.Dict[str, TownGeometry]:
    return {str(town): TownGeometry(str(town), dict(zip(group['cell_id'].astype(str), group['weight'].astype(float))))
            for town, group in frame.groupby('town_id', sort=True)}
