from .series import (ClimateVariable, Season, GridMonthlySeries, WindowedSeries, SeasonalIndex, SeasonalIndexSeries,
                     ExtremeYearIndex, CLIMATE_COLUMNS, extreme_frame)
from .standardizer import GammaStandardizer, fit_standardizer, standardize
from .indices import (rolling_3month, fit_cell_standardizers, seasonal_index, extreme_year_index, incomplete_years,
                      compute_cell_indices, read_climate, write_extreme_indices, climate_frame)
