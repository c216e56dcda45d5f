import logging
import typing as tp
from dataclasses import dataclass, field

import pandas as pd

from src.ingest import PANEL_COLUMNS
from src.utils.exceptions import InsufficientHistory, InvalidParam, UnassignedTown

logger = logging.getLogger(__name__)

Regions = tp.Union[pd.DataFrame, tp.Mapping[str, str]]


def region_mapping(regions: Regions) -> tp.Dict[str, str]:
    if isinstance(regions, pd.DataFrame):
        return dict(zip(regions['town_id'].astype(str), regions['region'].astype(str)))
    return {str(town): str(region) for town, region in regions.items()}


@dataclass(frozen=True)
class CvFold:
    """
    Train/test partition of the panel.
    Temporal folds test one year after a contiguous run of training years; spatial folds hold out regions.
    """
    training_years: tp.Tuple[int, ...]
    test_year: tp.Optional[int] = None
    holdout_regions: tp.FrozenSet[str] = field(default_factory=frozenset)
    short_history: bool = False

    @property
    def is_spatial(self) -> bool:
        return bool(self.holdout_regions)

    @property
    def name(self) -> str:
        if self.is_spatial:
            return f"region-{'+'.join(sorted(self.holdout_regions))}"
        return str(self.test_year)

    def split(self, panel: pd.DataFrame, regions: Regions = None) -> tp.Tuple[pd.DataFrame, pd.DataFrame]:
        """
        Training and test rows. Only the panel columns are handed over, so no other column of the
        input can reach a fitter.
        """
        panel = panel[PANEL_COLUMNS]
        in_training_years = panel['year'].isin(self.training_years)
        if not self.is_spatial:
            return panel[in_training_years].copy(), panel[panel['year'] == self.test_year].copy()
        if regions is None:
            raise InvalidParam(f"Fold {self.name} needs the region of every town")
        region = panel['town_id'].map(region_mapping(regions))
        held_out = region.isin(self.holdout_regions)
        return panel[in_training_years & ~held_out].copy(), panel[in_training_years & held_out].copy()


def temporal_folds(panel: pd.DataFrame, first_test_year: int, last_test_year: int) -> tp.List[CvFold]:
    """One fold per test year, trained on every earlier year of the panel."""
    if last_test_year < first_test_year:
        return []
    years = sorted(int(y) for y in panel['year'].unique())
    first_year = years[0] if years else first_test_year
    folds = []
    for test_year in range(first_test_year, last_test_year + 1):
        training = tuple(y for y in range(first_year, test_year) if y in years)
        if not training:
            raise InsufficientHistory(f"No training year before test year {test_year}")
        if training != tuple(range(training[0], test_year)):
            raise InsufficientHistory(f"Training years before {test_year} are not contiguous: {training}")
        short = len(training) == 1
        if short:
            logger.warning(f"Test year {test_year} is trained on the single year {training[0]}")
        if test_year not in years:
            logger.warning(f"Test year {test_year} has no panel rows")
        folds.append(CvFold(training_years=training, test_year=test_year, short_history=short))
    return folds


def spatial_folds(panel: pd.DataFrame, regions: Regions, k: int) -> tp.List[CvFold]:
    """Fold i trains on the towns of k - 1 regions and tests on region i, over all panel years."""
    mapping = region_mapping(regions)
    unassigned = sorted(set(panel['town_id'].astype(str)) - set(mapping))
    if unassigned:
        raise UnassignedTown(f"{len(unassigned)} towns have no region, first {unassigned[:5]}")
    used = sorted({mapping[town] for town in panel['town_id'].astype(str).unique()})
    if len(used) != k:
        raise InvalidParam(f"Panel towns span {len(used)} regions, expected k = {k}")
    years = tuple(sorted(int(y) for y in panel['year'].unique()))
    return [CvFold(training_years=years, holdout_regions=frozenset([region])) for region in used]
