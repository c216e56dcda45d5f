import numpy as np
import pytest

from src.models import (CostPipeline, ForestParams, build_design, compare_cost_models, compound_predict,
                        compound_records, fit_cost_pipelines, fit_glm, fit_severity, fit_total_cost, forest_fit,
                        simulate_compound)
from src.utils.exceptions import InvalidParam, MissingModel, ModelIncompatible


@pytest.mark.parametrize('rate, shape, scale', [(2.0, 2.0, 500.0), (0.3, 0.5, 16300.0)])
def test_simulated_compound_mean(rate, shape, scale):
    n = 100_000
    draws = simulate_compound(rate, shape, scale, n, seed=3)
    mean = rate * shape * scale
    standard_error = np.sqrt(rate * shape * (shape + 1) * scale ** 2 / n)
    assert abs(draws.mean() - mean) <= 4 * standard_error
    assert draws.min() >= 0


def test_simulated_compound_edge_cases():
    assert np.all(simulate_compound(0.0, 2.0, 10.0, 100, seed=1) == 0)
    np.testing.assert_array_equal(simulate_compound(1.0, 2.0, 10.0, 50, seed=1),
                                  simulate_compound(1.0, 2.0, 10.0, 50, seed=1))
    with pytest.raises(InvalidParam):
        simulate_compound(1.0, 0.0, 10.0, 10)


def test_compound_prediction_is_count_times_average(panel):
    frequency = fit_glm(build_design(panel), 'poisson')
    severity = fit_severity(panel)
    rows = panel[panel['year'] == 2008]
    predicted = compound_predict(frequency, severity, rows)
    np.testing.assert_allclose(predicted['predicted_total'],
                               predicted['predicted_count'] * predicted['predicted_avg_cost'])
    np.testing.assert_allclose(predicted['predicted_count'],
                               frequency.predict(rows, rows['exposure'].to_numpy(dtype=float)))
    assert predicted['severity_model_id'].unique().tolist() == [severity.model_id]
    records = compound_records(predicted)
    assert len(records) == len(rows)
    assert records[0].frequency_model_id == frequency.model_id


def test_compound_needs_matching_training_years(panel):
    frequency = fit_glm(build_design(panel), 'poisson')
    severity = fit_severity(panel[panel['year'] < 2008])
    with pytest.raises(ModelIncompatible):
        compound_predict(frequency, severity, panel[panel['year'] == 2008])


def test_compound_needs_matching_covariates(panel):
    frequency = fit_glm(build_design(panel), 'poisson')
    severity = fit_severity(panel, covariates=('essti', 'esswi', 'clay'))
    with pytest.raises(ModelIncompatible):
        compound_predict(frequency, severity, panel[panel['year'] == 2008])


@pytest.fixture(scope='module')
def pipelines(panel):
    train = panel[panel['year'] < 2008]
    severity = fit_severity(train)
    forest = forest_fit(train, ForestParams(n_trees=4, mtry=2, min_leaf=30, max_nodes=16), 'poisson', seed=1,
                        workers=1)
    return {'zinb+gamma': CostPipeline('zinb+gamma', frequency=fit_glm(build_design(train), 'poisson'),
                                       severity=severity),
            'rfp+gamma': CostPipeline('rfp+gamma', frequency=forest, severity=severity),
            'tweedie': CostPipeline('tweedie', total=fit_total_cost(train))}


def test_compare_cost_models(panel, pipelines):
    comparison = compare_cost_models(panel, 2008, pipelines)
    rows = panel[panel['year'] == 2008]
    assert comparison.totals['method'].tolist() == ['rfp+gamma', 'tweedie', 'zinb+gamma']
    assert comparison.totals['observed_total'].iloc[0] == pytest.approx(rows['cost_cents'].sum() / 100.0)
    assert np.all(comparison.totals['predicted_total'] > 0)
    assert np.all(np.isfinite(comparison.totals['rmse']))
    assert len(comparison.per_town) == 3 * len(rows)
    tweedie = comparison.per_town[comparison.per_town['method'] == 'tweedie']
    assert tweedie['predicted_count'].isna().all()


def test_compare_cost_models_needs_every_method(panel, pipelines):
    with pytest.raises(MissingModel):
        compare_cost_models(panel, 2008, {'tweedie': pipelines['tweedie']})
    with pytest.raises(MissingModel):
        compare_cost_models(panel, 2007, pipelines)
    with pytest.raises(MissingModel):
        CostPipeline('zinb+gamma', frequency=pipelines['zinb+gamma'].frequency).predict(panel)


@pytest.mark.slow
def test_fit_cost_pipelines(panel):
    fitted = fit_cost_pipelines(panel, 2008, seed=1, forest_params=ForestParams(n_trees=10, min_leaf=30))
    assert set(fitted) == {'zinb+gamma', 'rfp+gamma', 'tweedie'}
    assert all(p.training_years == (2001, 2007) for p in fitted.values())
    assert len(compare_cost_models(panel, 2008, fitted).totals) == 3
