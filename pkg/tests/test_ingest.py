import pandas as pd
import pytest

from src.climate import ExtremeYearIndex
from src.ingest import (PANEL_COLUMNS, TownGeometry, aggregate_clay, aggregate_indices, aggregate_town_clay,
                        build_panel, panel_records, read_panel, update_cat_flag, write_panel)
from src.utils.exceptions import (DuplicateKey, IncompleteCoverage, InvalidGeometry, InvariantViolation, MissingCell,
                                  SchemaError)


@pytest.fixture
def inputs():
    towns, years = ['01001', '01002'], [2003, 2004, 2005]
    exposure = pd.DataFrame([(t, y, 100, 2.5e7) for t in towns for y in years],
                            columns=['town_id', 'year', 'exposure', 'sums_insured'])
    claims = pd.DataFrame([('01001', 2004, 3, 48900.25)], columns=['town_id', 'year', 'claims', 'cost'])
    indices = pd.DataFrame([(t, y, -1.0, -0.5, 1.2) for t in towns for y in years],
                           columns=['town_id', 'year', 'espi', 'esswi', 'essti'])
    clay = pd.DataFrame({'town_id': towns, 'clay': [35.0, 0.0]})
    history = pd.DataFrame({'town_id': ['01001', '01001'], 'year': [2003, 1995]})
    return exposure, claims, indices, clay, history


def test_panel_rows_and_layout(inputs):
    panel = build_panel(*inputs)
    assert list(panel.columns) == PANEL_COLUMNS
    assert len(panel) == 6
    assert panel['town_id'].tolist()[:3] == ['01001'] * 3
    row = panel[(panel['town_id'] == '01001') & (panel['year'] == 2004)].iloc[0]
    assert row['claims'] == 3 and row['cost_cents'] == 4890025
    assert panel['claims'].sum() == 3
    assert panel['sums_insured_cents'].iloc[0] == 2_500_000_000


def test_cat_flag_counts_requests_strictly_before_the_year(inputs):
    panel = build_panel(*inputs)
    flags = panel.set_index(['town_id', 'year'])['cat']
    assert flags[('01001', 2003)] == 1
    assert flags[('01002', 2005)] == 0

    later = pd.DataFrame({'town_id': ['01002'], 'year': [2004]})
    updated = update_cat_flag(panel, later).set_index(['town_id', 'year'])['cat']
    assert updated[('01002', 2004)] == 0 and updated[('01002', 2005)] == 1


def test_missing_column_names_the_column(inputs):
    exposure, *rest = inputs
    with pytest.raises(SchemaError) as error:
        build_panel(exposure.drop(columns='exposure'), *rest)
    assert error.value.column == 'exposure'


def test_duplicate_key(inputs):
    exposure, claims, *rest = inputs
    with pytest.raises(DuplicateKey):
        build_panel(exposure, pd.concat([claims, claims]), *rest)


def test_violations_are_collected(inputs):
    exposure, claims, indices, clay, history = inputs
    claims = pd.concat([claims, pd.DataFrame([('01002', 2003, 0, 10.0)], columns=claims.columns)])
    clay = clay.assign(clay=[35.0, 140.0])
    with pytest.raises(InvariantViolation) as error:
        build_panel(exposure, claims, indices, clay, history)
    reasons = {reason for _, _, reason in error.value.violations}
    assert reasons == {"cost without claims", "clay outside [0, 100]"}


def test_panel_file_round_trip(inputs, tmp_path):
    panel = build_panel(*inputs)
    read = read_panel(write_panel(panel, tmp_path / 'panel.csv'))
    pd.testing.assert_frame_equal(read, panel)
    assert read['town_id'].iloc[0] == '01001'


def test_records_check_their_invariants(inputs):
    record = panel_records(build_panel(*inputs))[0]
    assert record.violations() == []
    assert record.cost == 0.0


def test_clay_keeps_the_highest_cell():
    geometry = TownGeometry('T', {'a': 0.7, 'b': 0.3})
    assert aggregate_clay({'a': 12.0, 'b': 40.0}, geometry) == 40.0
    with pytest.raises(MissingCell):
        aggregate_clay({'a': 12.0}, geometry)


def test_indices_are_area_weighted():
    geometry = TownGeometry('T', {'a': 0.75, 'b': 0.25})
    index = {'a': ExtremeYearIndex('a', 2010, -1.0, -2.0, 1.0), 'b': ExtremeYearIndex('b', 2010, 1.0, 2.0, 3.0)}
    town = aggregate_indices(index, geometry)
    assert (town.id, town.year) == ('T', 2010)
    assert town.espi == pytest.approx(-0.5)
    assert town.esswi == pytest.approx(-1.0)
    assert town.essti == pytest.approx(1.5)
    with pytest.raises(IncompleteCoverage):
        aggregate_indices({'a': index['a']}, geometry)


def test_town_clay_frame():
    geometries = {'T2': TownGeometry('T2', {'b': 1.0}), 'T1': TownGeometry('T1', {'a': 0.5, 'b': 0.5})}
    frame = aggregate_town_clay(pd.DataFrame({'cell_id': ['a', 'b'], 'clay': [10.0, 30.0]}), geometries)
    assert frame.values.tolist() == [['T1', 30.0], ['T2', 30.0]]


def test_geometry_weights_must_sum_to_one():
    with pytest.raises(InvalidGeometry):
        TownGeometry('T', {'a': 0.5, 'b': 0.4})
    with pytest.raises(InvalidGeometry):
        TownGeometry('T', {})
    assert InvalidGeometry.category == 'data'


def test_claims_without_exposure_are_reported(inputs):
    exposure, claims, *rest = inputs
    claims = pd.concat([claims, pd.DataFrame([('09999', 2004, 7, 1000.0)], columns=claims.columns)])
    with pytest.raises(InvariantViolation) as error:
        build_panel(exposure, claims, *rest)
    assert error.value.violations == [('09999', 2004, "claims without exposure")]
