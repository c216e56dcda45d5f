import numpy as np
import pytest
from scipy import stats

from src.climate import (ClimateVariable, GammaStandardizer, Season, SeasonalIndex, SeasonalIndexSeries,
                         compute_cell_indices, extreme_year_index, fit_cell_standardizers, fit_standardizer,
                         incomplete_years, rolling_3month, seasonal_index, standardize)
from src.synthetic import generate_climate
from src.utils.exceptions import DegenerateSample, ReferencePeriodError


def test_precipitation_windows_are_sums(monthly_series):
    series = monthly_series(years=[2001], precipitation=np.arange(1.0, 13.0))
    windows = rolling_3month(series, ClimateVariable.precip)
    assert windows.months.tolist() == list(range(3, 13))
    assert windows.values[0] == pytest.approx(6.0)
    assert windows.values[-1] == pytest.approx(10.0 + 11.0 + 12.0)


def test_state_variables_are_averaged(monthly_series):
    series = monthly_series(years=[2001])
    windows = rolling_3month(series, ClimateVariable.soil_water)
    assert windows.values[0] == pytest.approx(series.soil_water[:3].mean())


def test_gap_skips_the_windows_it_touches(monthly_series):
    precipitation = np.arange(1.0, 13.0)
    precipitation[4] = np.nan
    series = monthly_series(years=[2001], precipitation=precipitation)
    windows = rolling_3month(series, ClimateVariable.precip)
    assert 5 not in windows.months and 6 not in windows.months and 7 not in windows.months
    assert windows.skipped == [(2001, 6), (2001, 7)]


def test_mle_matches_scipy_gamma_fit():
    sample = np.array([0.8, 1.7, 2.2, 3.1, 4.6])
    fitted = fit_standardizer(sample, calibration_month=7, reference_years=(1981, 1985), min_positive=5)
    shape, _, scale = stats.gamma.fit(sample, floc=0)
    assert not fitted.degenerate
    assert fitted.shape == pytest.approx(shape, rel=1e-4)
    assert fitted.scale == pytest.approx(scale, rel=1e-4)
    assert fitted.mean == pytest.approx(sample.mean(), rel=1e-10)


def test_median_standardizes_to_zero():
    std = GammaStandardizer(shape=2.0, scale=1.5, zero_mass=0.0, calibration_month=1, reference_years=(1981, 2010))
    assert standardize(stats.gamma.median(2.0, scale=1.5), std) == pytest.approx(0.0, abs=1e-9)


def test_zeros_take_the_middle_of_the_point_mass():
    std = fit_standardizer([0.0, 0.0, 1.0, 2.0, 2.5, 3.0, 4.0, 1.2, 0.7, 2.2, 3.3, 1.9], min_positive=5)
    assert std.zero_mass == pytest.approx(2 / 12)
    assert standardize(0.0, std) == pytest.approx(stats.norm.ppf(1 / 12))


def test_extreme_values_are_clamped():
    std = GammaStandardizer(shape=2.0, scale=1.0, zero_mass=0.0, calibration_month=1, reference_years=(1981, 2010))
    assert standardize(1e6, std) == 5.0
    assert standardize(1e-300, std) == -5.0


def test_constant_sample_uses_moment_fallback():
    std = fit_standardizer([2.0] * 12)
    assert std.degenerate
    assert std.mean == pytest.approx(2.0)


def test_all_zero_sample_is_degenerate():
    with pytest.raises(DegenerateSample):
        fit_standardizer([0.0] * 12)


def test_spi_is_invariant_under_rescaling():
    rng = np.random.default_rng(3)
    sample = rng.gamma(2.0, 30.0, 40)
    z = standardize(sample, fit_standardizer(sample))
    z_small = standardize(sample * 1e-6, fit_standardizer(sample * 1e-6))
    np.testing.assert_allclose(z, z_small, atol=1e-6)


def test_reference_period_outside_coverage(monthly_series):
    with pytest.raises(ReferencePeriodError):
        fit_cell_standardizers(monthly_series(years=range(2000, 2003)), reference_years=(1990, 2002))


def _seasonal(rng, years):
    entries = [SeasonalIndex(year=year, season=season, spi=rng.normal(), sswi=rng.normal(), ssti=rng.normal())
               for year in years for season in Season]
    return SeasonalIndexSeries(cell_id='X', entries=entries)


def test_extremes_are_seasonal_minima_and_maximum():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        seasonal = _seasonal(rng, [2001])
        extreme, = extreme_year_index(seasonal)
        assert extreme.espi == min(e.spi for e in seasonal.entries)
        assert extreme.esswi == min(e.sswi for e in seasonal.entries)
        assert extreme.essti == max(e.ssti for e in seasonal.entries)


def test_partial_year_is_skipped():
    rng = np.random.default_rng(1)
    seasonal = _seasonal(rng, [2001, 2002])
    seasonal.entries.pop()
    assert incomplete_years(seasonal) == [2002]
    assert [e.year for e in extreme_year_index(seasonal)] == [2001]


def test_first_year_lacks_its_winter(monthly_series):
    records = compute_cell_indices(monthly_series(years=range(1990, 2002)), min_positive=5)
    assert [r.year for r in records] == list(range(1991, 2002))


def test_standardized_indices_are_close_to_standard_normal():
    for series in generate_climate(n_cells=2, first_year=1979, last_year=2018, seed=5):
        seasonal = seasonal_index(series, fit_cell_standardizers(series))
        for name in ['spi', 'sswi', 'ssti']:
            values = np.array([getattr(e, name) for e in seasonal.entries])
            assert abs(values.mean()) <= 0.15
            assert 0.7 <= values.var() <= 1.3
