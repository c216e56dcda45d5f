import logging
import typing as tp
from pathlib import Path

import numpy as np
import pandas as pd

from src.utils.exceptions import DuplicateKey, InvariantViolation
from src.utils.io import check_columns, read_frame, write_frame
from .records import PANEL_COLUMNS, PANEL_DTYPES, to_cents

logger = logging.getLogger(__name__)

EXPOSURE_COLUMNS = ['town_id', 'year', 'exposure', 'sums_insured']
CLAIMS_COLUMNS = ['town_id', 'year', 'claims', 'cost']
INDEX_COLUMNS = ['town_id', 'year', 'espi', 'esswi', 'essti']
CLAY_COLUMNS = ['town_id', 'clay']
CAT_HISTORY_COLUMNS = ['town_id', 'year']
KEY = ['town_id', 'year']


def _check_unique(frame: pd.DataFrame, key: tp.List[str], source: str):
    duplicated = frame.duplicated(key, keep=False)
    if duplicated.any():
        first = frame.loc[duplicated, key].iloc[0].tolist()
        raise DuplicateKey(f"{source}: {int(duplicated.sum())} rows share a key, first {first}")


def update_cat_flag(panel: pd.DataFrame, history: pd.DataFrame) -> pd.DataFrame:
    """
    Flag the towns that requested a natural catastrophe recognition strictly before the modelled year.
    :param history: one row per (town_id, year of request)
    """
    check_columns(history, CAT_HISTORY_COLUMNS, 'cat history')
    first_request = history.groupby(history['town_id'].astype(str))['year'].min()
    earliest = panel['town_id'].astype(str).map(first_request)
    panel = panel.copy()
    panel['cat'] = (earliest.notna() & (panel['year'] > earliest)).astype(int)
    return panel


def build_panel(exposure: pd.DataFrame, claims: pd.DataFrame, indices: pd.DataFrame, clay: pd.DataFrame,
                cat_history: pd.DataFrame) -> pd.DataFrame:
    """
    Join insurance, climate and soil inputs into the town-year panel.
    One row per exposure row; towns without a claims row have no claim. Rows breaking a record invariant
    are all reported at once.
    """
    for frame, columns, source in [(exposure, EXPOSURE_COLUMNS, 'exposure'), (claims, CLAIMS_COLUMNS, 'claims'),
                                   (indices, INDEX_COLUMNS, 'indices'), (clay, CLAY_COLUMNS, 'clay'),
                                   (cat_history, CAT_HISTORY_COLUMNS, 'cat history')]:
        check_columns(frame, columns, source)
    _check_unique(exposure, KEY, 'exposure')
    _check_unique(claims, KEY, 'claims')
    _check_unique(indices, KEY, 'indices')
    _check_unique(clay, ['town_id'], 'clay')

    def keyed(frame: pd.DataFrame, columns: tp.List[str]) -> pd.DataFrame:
        frame = frame[columns].copy()
        frame['town_id'] = frame['town_id'].astype(str)
        if 'year' in frame:
            frame['year'] = frame['year'].astype(int)
        return frame

    panel = keyed(exposure, EXPOSURE_COLUMNS)
    orphans = _unmatched(keyed(claims, CLAIMS_COLUMNS), panel)
    panel = panel.merge(keyed(claims, CLAIMS_COLUMNS), on=KEY, how='left', validate='one_to_one')
    panel['claims'] = panel['claims'].fillna(0)
    panel['cost'] = panel['cost'].fillna(0.0)
    panel = panel.merge(keyed(indices, INDEX_COLUMNS), on=KEY, how='left', validate='one_to_one')
    panel = panel.merge(keyed(clay, CLAY_COLUMNS), on='town_id', how='left', validate='many_to_one')
    panel = update_cat_flag(panel, keyed(cat_history, CAT_HISTORY_COLUMNS))

    panel['cost_cents'] = to_cents(panel['cost'])
    panel['sums_insured_cents'] = to_cents(panel['sums_insured'])

    violations = sorted(_violations(panel) + orphans)
    if violations:
        raise InvariantViolation(violations)

    panel = panel[PANEL_COLUMNS].astype(PANEL_DTYPES)
    logger.info(f"Panel built: {len(panel)} town-years, {panel['town_id'].nunique()} towns")
    return panel.sort_values(KEY, kind='mergesort').reset_index(drop=True)


def _unmatched(claims: pd.DataFrame, exposure: pd.DataFrame) -> tp.List[tp.Tuple[str, int, str]]:
    """Claims rows whose key has no exposure row."""
    matched = claims[KEY].merge(exposure[KEY], on=KEY, how='left', indicator=True)
    orphans = matched.loc[matched['_merge'] == 'left_only', KEY]
    return [(town, int(year), "claims without exposure") for town, year in orphans.itertuples(index=False)]


def _violations(panel: pd.DataFrame) -> tp.List[tp.Tuple[str, int, str]]:
    checks = [
        (panel[['exposure', 'claims', 'cost_cents', 'sums_insured_cents']].lt(0).any(axis=1),
         "negative count or amount"),
        ((panel['exposure'] % 1 != 0) | (panel['claims'] % 1 != 0), "non-integer count"),
        ((panel['claims'] == 0) & (panel['cost_cents'] != 0), "cost without claims"),
        ((panel['exposure'] == 0) & (panel['claims'] != 0), "claims without exposure"),
        (panel[['espi', 'esswi', 'essti']].isna().any(axis=1), "missing drought index"),
        (panel['clay'].isna(), "missing clay"),
        (~panel['clay'].between(0, 100) & panel['clay'].notna(), "clay outside [0, 100]"),
    ]
    found = []
    for mask, reason in checks:
        mask = np.asarray(mask)
        found.extend((town, int(year), reason) for town, year in panel.loc[mask, KEY].itertuples(index=False))
    return sorted(found)


def read_panel(path: tp.Union[str, Path]) -> pd.DataFrame:
    return read_frame(path, PANEL_COLUMNS, source='panel').astype(PANEL_DTYPES)


def write_panel(panel: pd.DataFrame, path: tp.Union[str, Path]) -> Path:
    return write_frame(panel[PANEL_COLUMNS], path)
