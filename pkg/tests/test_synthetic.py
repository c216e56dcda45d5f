import numpy as np
import pandas as pd
import pytest

from src.synthetic import GeneratorConfig, generate_climate, generate_panel, read_truth, recovery_test
from src.utils.exceptions import InvalidConfig, InvalidParam
from tests.conftest import small_config


def test_generation_is_deterministic(synthetic):
    again = generate_panel(small_config(), workers=1)
    pd.testing.assert_frame_equal(synthetic.panel, again.panel)
    assert synthetic.truth == again.truth
    other = generate_panel(small_config(seed=8), workers=1)
    assert not other.panel['claims'].equals(synthetic.panel['claims'])


def test_worker_split_does_not_change_the_panel():
    config = small_config(n_towns=700, first_year=2005)
    pd.testing.assert_frame_equal(generate_panel(config, workers=1).panel, generate_panel(config, workers=2).panel)


def test_rate_matches_the_intercept():
    config = small_config(frequency_coefficients=(np.log(1e-4), 0, 0, 0, 0, 0), exposure_log_mean=np.log(1e4),
                          exposure_log_sd=0.0)
    panel = generate_panel(config, workers=1).panel
    assert (panel['exposure'] == 10000).all()
    assert panel['claims'].mean() == pytest.approx(1.0, abs=4 / np.sqrt(len(panel)))


def test_default_truth_is_mostly_zero():
    synthetic = generate_panel(GeneratorConfig(seed=3, n_towns=400, first_year=2010), workers=1)
    assert synthetic.truth.zero_share > 0.8
    assert synthetic.truth.n_rows == 400 * 9


def test_panel_layout(synthetic):
    panel = synthetic.panel
    assert len(panel) == 300 * 8
    assert panel['cat'].isin([0, 1]).all()
    assert (panel.loc[panel['claims'] == 0, 'cost_cents'] == 0).all()
    assert (panel.loc[panel['claims'] > 0, 'cost_cents'] > 0).all()
    assert (synthetic.claims['claims'] > 0).all()
    assert panel['clay'].between(0, 100).all()
    assert synthetic.regions['region'].nunique() == 4
    # once a town has been declared, it stays declared
    assert panel.groupby('town_id')['cat'].apply(lambda c: c.is_monotonic_increasing).all()


@pytest.mark.parametrize('overrides', [dict(family='gaussian'), dict(n_towns=0), dict(first_year=2010, last_year=2005),
                                       dict(year_shock_weight=0.8, region_shock_weight=0.5),
                                       dict(frequency_coefficients=(1.0, 2.0)), dict(negbin_size=0.0)])
def test_invalid_config(overrides):
    with pytest.raises(InvalidConfig):
        small_config(**overrides)


def test_written_files(synthetic, tmp_path):
    paths = synthetic.write(tmp_path)
    assert sorted(p.name for p in paths) == sorted(['panel.csv', 'exposure.csv', 'claims.csv', 'indices.csv',
                                                    'clay.csv', 'cat_history.csv', 'regions.csv', 'truth.yaml'])
    truth = read_truth(tmp_path / 'truth.yaml')
    assert truth == synthetic.truth
    assert truth.total_claims == int(synthetic.panel['claims'].sum())


def test_poisson_recovery():
    result = recovery_test(small_config(), 'poisson', standard_errors=4.0, workers=1)
    assert result.passed
    assert result.table['term'].tolist() == ['intercept', 'essti', 'esswi', 'clay', 'cat', 'espi']


def test_recovery_needs_a_compatible_truth():
    with pytest.raises(InvalidParam):
        recovery_test(small_config(), 'zip', workers=1)


@pytest.mark.slow
def test_negbin_recovery():
    result = recovery_test(small_config(family='negbin', negbin_size=1.0, n_towns=2000), 'negbin', standard_errors=4.0,
                           workers=1)
    assert result.passed


def test_climate_generator():
    cells = generate_climate(n_cells=3, first_year=1990, last_year=1999, seed=1)
    assert [c.cell_id for c in cells] == ['C001', 'C002', 'C003']
    assert all(len(c.precipitation) == 120 for c in cells)
    np.testing.assert_array_equal(cells[1].soil_water, generate_climate(3, 1990, 1999, seed=1)[1].soil_water)
    with pytest.raises(InvalidConfig):
        generate_climate(n_cells=0)
