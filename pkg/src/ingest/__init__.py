from .records import (TownYearRecord, TownGeometry, PANEL_COLUMNS, PANEL_DTYPES, panel_records, geometries_from_frame,
                      to_cents, from_cents)
from .aggregation import aggregate_clay, aggregate_indices, aggregate_town_indices, aggregate_town_clay
from .panel import (build_panel, update_cat_flag, read_panel, write_panel, EXPOSURE_COLUMNS, CLAIMS_COLUMNS,
                    INDEX_COLUMNS, CLAY_COLUMNS, CAT_HISTORY_COLUMNS)
