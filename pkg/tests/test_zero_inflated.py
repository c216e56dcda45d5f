import numpy as np
import pytest

from src.models import build_design, fit_glm, fit_zero_inflated, zi_pmf, zi_predict
from src.synthetic import generate_panel
from src.utils.exceptions import BoundaryEstimate, InvalidParam
from tests.conftest import STRONG_COEFFICIENTS, small_config

ZERO_TRUTH = (0.5, -0.4, 0.3, 0.0, -0.5, 0.0)


@pytest.fixture(scope='module')
def zip_panel():
    return generate_panel(small_config(family='zip', zero_coefficients=ZERO_TRUTH, n_towns=600), workers=1).panel


@pytest.mark.parametrize('family, theta', [('zip', None), ('zinb', 0.5), ('zinb', 3.0)])
@pytest.mark.parametrize('p', [0.0, 0.3, 0.9])
@pytest.mark.parametrize('mean', [0.5, 5.0, 30.0])
def test_pmf_sums_to_one(family, theta, p, mean):
    variance = mean if theta is None else mean + mean ** 2 / theta
    y = np.arange(0, int(mean + 40 * np.sqrt(variance)) + 50)
    assert zi_pmf(y, p, mean, family, theta).sum() == pytest.approx(1.0, abs=1e-8)


def test_pmf_zero_mass():
    assert zi_pmf(0, 0.2, 1.5) == pytest.approx(0.2 + 0.8 * np.exp(-1.5))
    assert zi_pmf(3, 0.2, 1.5) == pytest.approx(0.8 * np.exp(-1.5) * 1.5 ** 3 / 6)


@pytest.mark.parametrize('args', [(0, 1.2, 1.0), (0, 0.5, 0.0), (-1, 0.5, 1.0), (1.5, 0.5, 1.0)])
def test_pmf_rejects_invalid_parameters(args):
    with pytest.raises(InvalidParam):
        zi_pmf(*args)


def test_zinb_pmf_needs_theta():
    with pytest.raises(InvalidParam):
        zi_pmf(0, 0.5, 1.0, 'zinb')


def test_zip_likelihood_nests_poisson(zip_panel):
    design = build_design(zip_panel)
    poisson = fit_glm(design, 'poisson')
    model = fit_zero_inflated(design, family='zip')
    assert model.log_likelihood >= poisson.log_likelihood - 1e-6
    assert model.k == 2 * (len(design.covariates) + 1)


def test_zip_recovers_the_count_block(zip_panel):
    model = fit_zero_inflated(build_design(zip_panel), family='zip')
    z = (model.count_coefficients - np.array(STRONG_COEFFICIENTS)) / model.count_standard_errors
    assert np.all(np.abs(z) <= 4)
    assert model.zero_coefficients[0] == pytest.approx(ZERO_TRUTH[0], abs=5 * model.zero_standard_errors[0])


def test_prediction_is_the_mixture_mean(zip_panel):
    model = fit_zero_inflated(build_design(zip_panel), family='zip')
    rows = zip_panel[zip_panel['year'] == 2008]
    exposure = rows['exposure'].to_numpy(dtype=float)
    expected = (1 - model.zero_probability(rows, exposure)) * model.count_mean(rows, exposure)
    np.testing.assert_allclose(zi_predict(model, rows, exposure), expected)
    np.testing.assert_allclose(model.predict(rows, exposure), expected)
    assert set(model.coefficient_table()['block']) == {'count', 'zero'}


def test_no_excess_zeros_collapses_to_poisson():
    design = build_design(generate_panel(small_config(n_towns=600), workers=1).panel)
    model = fit_zero_inflated(design, family='zip')
    poisson = fit_glm(design, 'poisson')
    assert model.boundary
    assert 'zero probability at boundary' in model.flags
    np.testing.assert_allclose(model.count_coefficients, poisson.coefficients, atol=1e-3)
    np.testing.assert_allclose(model.count_standard_errors, poisson.standard_errors, rtol=1e-2)
    assert np.all(np.isnan(model.zero_standard_errors))
    assert np.max(model.zero_probability(design.x[:, 1:], design.exposure)) < 1e-3
    assert model.log_likelihood >= poisson.log_likelihood - 1e-6


@pytest.mark.parametrize('seed', range(20))
def test_mixtures_nest_their_count_family(seed):
    truth = dict(family='zip', zero_coefficients=ZERO_TRUTH) if seed % 2 else dict(family='negbin', negbin_size=2.0)
    design = build_design(generate_panel(small_config(seed=seed, n_towns=100, first_year=2004, **truth),
                                         workers=1).panel)
    assert fit_zero_inflated(design, family='zip').log_likelihood >= fit_glm(design, 'poisson').log_likelihood - 1e-6
    if seed < 6:
        negbin = fit_glm(design, 'negbin')
        assert fit_zero_inflated(design, family='zinb').log_likelihood >= negbin.log_likelihood - 1e-6


def test_all_zero_response_is_a_boundary(panel):
    design = build_design(panel)
    with pytest.raises(BoundaryEstimate):
        fit_zero_inflated(design.with_response(np.zeros(design.n)), family='zip')


@pytest.mark.slow
def test_zinb_recovers_theta():
    synthetic = generate_panel(small_config(family='zinb', zero_coefficients=ZERO_TRUTH, n_towns=1500,
                                            negbin_size=2.0), workers=1)
    model = fit_zero_inflated(build_design(synthetic.panel), family='zinb')
    assert model.theta == pytest.approx(2.0, rel=0.5)
    assert model.aic < fit_glm(build_design(synthetic.panel), 'poisson').aic


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(5))
def test_aic_orders_the_families_on_zero_inflated_overdispersed_data(seed):
    config = small_config(seed=seed, n_towns=3000, family='zinb', negbin_size=1.5,
                          frequency_coefficients=(-7.0, 0.8, -0.4, 0.02, 1.0, -0.1),
                          zero_coefficients=(0.5, -0.6, 0.3, 0.0, -0.8, 0.0))
    design = build_design(generate_panel(config, workers=1).panel)
    aic = [fit_zero_inflated(design, family='zinb').aic, fit_zero_inflated(design, family='zip').aic,
           fit_glm(design, 'negbin').aic, fit_glm(design, 'poisson').aic]
    assert aic == sorted(aic)
