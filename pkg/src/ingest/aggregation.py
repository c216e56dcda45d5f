import typing as tp
from collections import defaultdict

import numpy as np
import pandas as pd

from src.climate import ExtremeYearIndex
from src.utils.exceptions import MissingCell, IncompleteCoverage
from .records import TownGeometry


def aggregate_clay(cells: tp.Mapping[str, float], geometry: TownGeometry) -> float:
    """Highest clay concentration among the member cells of the town."""
    missing = [cell for cell in geometry.cells if cell not in cells]
    if missing:
        raise MissingCell(f"Town {geometry.town_id}: no clay value for cells {missing}")
    return float(max(cells[cell] for cell in geometry.cells))


def aggregate_indices(index: tp.Mapping[str, ExtremeYearIndex], geometry: TownGeometry) -> ExtremeYearIndex:
    """
    Area-weighted mean of the cell extremes of one year.
    :param index: extreme index of the year by cell id
    """
    missing = [cell for cell in geometry.cells if cell not in index]
    if missing:
        raise IncompleteCoverage(f"Town {geometry.town_id}: no index for cells {missing}")
    weights = np.array([geometry.weights[cell] for cell in geometry.cells])
    members = [index[cell] for cell in geometry.cells]
    years = {m.year for m in members}
    if len(years) != 1:
        raise IncompleteCoverage(f"Town {geometry.town_id}: cell indices span years {sorted(years)}")
    return ExtremeYearIndex(id=geometry.town_id, year=years.pop(),
                            espi=float(weights @ np.array([m.espi for m in members])),
                            esswi=float(weights @ np.array([m.esswi for m in members])),
                            essti=float(weights @ np.array([m.essti for m in members])))


def aggregate_town_indices(cell_indices: tp.Iterable[ExtremeYearIndex],
                           geometries: tp.Mapping[str, TownGeometry]) -> tp.List[ExtremeYearIndex]:
    by_year: tp.Dict[int, tp.Dict[str, ExtremeYearIndex]] = defaultdict(dict)
    for record in cell_indices:
        by_year[record.year][record.id] = record
    return [aggregate_indices(by_year[year], geometries[town])
            for town in sorted(geometries) for year in sorted(by_year)]


def aggregate_town_clay(cell_clay: pd.DataFrame, geometries: tp.Mapping[str, TownGeometry]) -> pd.DataFrame:
    cells = dict(zip(cell_clay['cell_id'].astype(str), cell_clay['clay'].astype(float)))
    return pd.DataFrame([(town, aggregate_clay(cells, geometries[town])) for town in sorted(geometries)],
                        columns=['town_id', 'clay'])
