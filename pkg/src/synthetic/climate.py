import typing as tp

import numpy as np

from config import GeneralConfig, SyntheticConfig
from src.climate import GridMonthlySeries
from src.utils.exceptions import InvalidConfig


def generate_climate(n_cells: int = None, first_year: int = None, last_year: int = None,
                     seed: int = None) -> tp.List[GridMonthlySeries]:
    """
    Monthly precipitation, soil water and soil temperature with a seasonal cycle per cell.
    Precipitation is gamma distributed, soil water beta distributed and soil temperature normal around a seasonal cosine.
    """
    n_cells = SyntheticConfig.CLIMATE_CELLS if n_cells is None else n_cells
    first_year = SyntheticConfig.CLIMATE_FIRST_YEAR if first_year is None else first_year
    last_year = SyntheticConfig.LAST_YEAR if last_year is None else last_year
    seed = GeneralConfig.SEED if seed is None else seed
    if n_cells < 1 or last_year < first_year:
        raise InvalidConfig(f"Need at least one cell and one year, got {n_cells} cells, {first_year}-{last_year}")

    years = np.repeat(np.arange(first_year, last_year + 1), 12)
    months = np.tile(np.arange(1, 13), last_year - first_year + 1)
    phase = 2 * np.pi * (months - 1) / 12
    series = []
    for j in range(n_cells):
        rng = np.random.default_rng([seed, 2, j])
        rain_mean = 2.0 + 0.8 * np.cos(phase) + rng.uniform(-0.3, 0.3)
        precipitation = rng.gamma(2.0, rain_mean / 2.0)
        water_mean = np.clip(0.30 + 0.08 * np.cos(phase), 0.05, 0.95)
        soil_water = rng.beta(water_mean * 40, (1 - water_mean) * 40)
        soil_temperature = 284.0 - 8.0 * np.cos(phase) + rng.normal(0.0, 1.5, years.size)
        series.append(GridMonthlySeries(cell_id=f"C{j + 1:03d}", latitude=43.0 + 0.25 * j, longitude=1.0 + 0.25 * j,
                                        years=years, months=months, precipitation=precipitation,
                                        soil_water=soil_water, soil_temperature=soil_temperature))
    return series
