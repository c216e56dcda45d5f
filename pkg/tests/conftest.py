from contextlib import contextmanager

import numpy as np
import pandas as pd
import pytest

import config
from src.climate import GridMonthlySeries
from src.synthetic import GeneratorConfig, generate_panel

# intercept, essti, esswi, clay, cat, espi; about one or two claims per town-year
STRONG_COEFFICIENTS = (-6.0, 0.5, -0.3, 0.01, 0.8, -0.1)


@contextmanager
def preserved_config():
    """Commands and config files overwrite class constants; restores them on exit."""
    saved = {section: config._constants(section) for section in config._SECTIONS.values()}
    try:
        yield
    finally:
        for section, values in saved.items():
            for name, value in values.items():
                setattr(section, name, value)


@pytest.fixture(autouse=True)
def restore_config():
    with preserved_config():
        yield


def small_config(**overrides) -> GeneratorConfig:
    settings = dict(seed=7, n_towns=300, first_year=2001, last_year=2008, n_regions=4,
                    frequency_coefficients=STRONG_COEFFICIENTS, cat_request_rate=0.03)
    settings.update(overrides)
    return GeneratorConfig(**settings)


@pytest.fixture(scope='session')
def synthetic():
    return generate_panel(small_config(), workers=1)


@pytest.fixture(scope='session')
def panel(synthetic) -> pd.DataFrame:
    return synthetic.panel


@pytest.fixture
def monthly_series():
    def make(years=range(2000, 2003), precipitation=None, cell_id='C1'):
        years = list(years)
        n = 12 * len(years)
        rng = np.random.default_rng(0)
        return GridMonthlySeries(cell_id=cell_id, latitude=45.0, longitude=2.0,
                                 years=np.repeat(years, 12), months=np.tile(np.arange(1, 13), len(years)),
                                 precipitation=rng.gamma(2.0, 1.0, n) if precipitation is None else precipitation,
                                 soil_water=rng.uniform(0.1, 0.5, n), soil_temperature=rng.normal(285.0, 3.0, n))
    return make
