import numpy as np
import pytest
from scipy import integrate
from scipy.special import expit

from config import GlmConfig
from src.models import (DesignMatrix, Family, build_design, fit_glm, fit_tweedie, information_criteria, power_scan,
                        tweedie_log_density)
from src.models.cost import fit_severity, fit_total_cost, simulate_compound
from src.synthetic import generate_panel
from src.utils.exceptions import BadResponse, PowerOutOfRange, QuasiLikelihoodOnly, SingularDesign
from tests.conftest import small_config


def _design(x, y, exposure=None):
    x = np.asarray(x, dtype=float).reshape(len(y), -1)
    exposure = np.ones(len(y)) if exposure is None else np.asarray(exposure, dtype=float)
    names = tuple(f"x{i}" for i in range(x.shape[1]))
    return DesignMatrix(x=np.column_stack([np.ones(len(y)), x]), covariates=names, response=np.asarray(y, float),
                        exposure=exposure, offset=np.log(exposure), weights=np.ones(len(y)),
                        training_years=(2001, 2010))


def test_poisson_score_vanishes_at_the_estimate(panel):
    design = build_design(panel)
    model = fit_glm(design, 'poisson')
    mu = model.predict(panel[panel['exposure'] > 0], design.exposure)
    score = design.x.T @ (design.response - mu)
    scale = np.abs(design.x).T @ design.response
    assert np.all(np.abs(score) <= 1e-5 * scale)
    assert model.terms == ('intercept', 'essti', 'esswi', 'clay', 'cat', 'espi')


def test_poisson_standard_errors_from_the_information(panel):
    design = build_design(panel)
    model = fit_glm(design, 'poisson')
    mu = np.exp(design.x @ model.coefficients + design.offset)
    expected = np.sqrt(np.diag(np.linalg.inv((design.x * mu[:, None]).T @ design.x)))
    np.testing.assert_allclose(model.standard_errors, expected, rtol=1e-6)


def test_intercept_only_poisson_is_the_overall_rate():
    rng = np.random.default_rng(4)
    exposure = rng.integers(50, 500, 200)
    y = rng.poisson(0.01 * exposure)
    model = fit_glm(_design(rng.normal(size=200), y, exposure), 'poisson')
    x = np.ones((200, 1))
    design = DesignMatrix(x=x, covariates=(), response=y.astype(float), exposure=exposure.astype(float),
                          offset=np.log(exposure), weights=np.ones(200))
    intercept_only = fit_glm(design, 'poisson')
    assert intercept_only.coefficients[0] == pytest.approx(np.log(y.sum() / exposure.sum()), abs=1e-8)
    assert model.log_likelihood >= intercept_only.log_likelihood


def test_information_criteria():
    rng = np.random.default_rng(5)
    x = rng.normal(size=300)
    model = fit_glm(_design(x, rng.poisson(np.exp(0.3 + 0.5 * x))), 'poisson')
    assert model.k == 2
    assert model.aic == pytest.approx(4 - 2 * model.log_likelihood)
    assert model.bic == pytest.approx(2 * np.log(300) - 2 * model.log_likelihood)


def test_negbin_recovers_the_size():
    synthetic = generate_panel(small_config(family='negbin', negbin_size=2.0, n_towns=500), workers=1)
    design = build_design(synthetic.panel)
    negbin, poisson = fit_glm(design, 'negbin'), fit_glm(design, 'poisson')
    assert negbin.theta == pytest.approx(2.0, rel=0.5)
    assert negbin.k == 7
    assert negbin.log_likelihood > poisson.log_likelihood
    assert negbin.aic < poisson.aic


def test_binomial_matches_poisson_for_rare_events():
    rng = np.random.default_rng(6)
    x = rng.normal(size=3000)
    exposure = rng.integers(1000, 5000, 3000)
    y = rng.poisson(exposure * np.exp(-7 + 0.4 * x))
    design = _design(x, y, exposure)
    poisson, binomial = fit_glm(design, 'poisson'), fit_glm(design, Family.binomial)
    np.testing.assert_allclose(binomial.coefficients, poisson.coefficients, atol=0.01)
    p = binomial.predict(x.reshape(-1, 1), exposure) / exposure
    np.testing.assert_allclose(p, expit(binomial.coefficients[0] + binomial.coefficients[1] * x))


def test_bad_response_and_singular_design():
    x = np.arange(10.0)
    with pytest.raises(BadResponse):
        fit_glm(_design(x, -np.ones(10)), 'poisson')
    with pytest.raises(BadResponse):
        fit_glm(_design(x, np.zeros(10)), 'poisson')
    with pytest.raises(SingularDesign):
        fit_glm(_design(np.column_stack([x, 2 * x]), np.ones(10)), 'poisson')
    with pytest.raises(SingularDesign):
        fit_glm(_design(x[:2], np.ones(2)), 'poisson')


def test_gamma_severity_recovers_mean_cost_and_shape(synthetic):
    model = fit_severity(synthetic.panel)
    claimed = synthetic.panel[synthetic.panel['claims'] > 0]
    claims = claimed['claims'].to_numpy(dtype=float)
    mean_cost = np.average(model.predict(claimed), weights=claims)
    assert mean_cost == pytest.approx(synthetic.truth.severity_mean, rel=0.05)
    assert 1 / model.dispersion == pytest.approx(synthetic.truth.severity_shape, rel=0.2)
    assert model.family is Family.gamma
    assert model.training_years == (2001, 2008)


def test_tweedie_total_cost(panel):
    model = fit_total_cost(panel)
    assert model.tweedie_power == 1.5
    assert model.covariates == ('essti', 'esswi', 'clay', 'cat')
    assert np.isfinite(model.log_likelihood)
    assert model.dispersion > 0
    predicted = model.predict(panel, panel['exposure'].to_numpy(dtype=float))
    assert np.all(np.isfinite(predicted)) and np.all(predicted > 0)


def test_tweedie_power_checks(panel):
    design = build_design(panel, ('essti', 'esswi', 'clay', 'cat'), response='cost')
    with pytest.raises(PowerOutOfRange):
        fit_tweedie(design, 2.0)
    scan = power_scan(design, (1.3, 1.5, 1.7))
    assert scan.table['power'].tolist() == [1.3, 1.5, 1.7]
    assert scan.best_power == scan.table.loc[scan.table['aic'].idxmin(), 'power']


def test_tweedie_without_density_is_quasi_likelihood(panel, monkeypatch):
    monkeypatch.setattr(GlmConfig, 'TWEEDIE_DENSITY', False)
    model = fit_total_cost(panel)
    assert model.log_likelihood is None
    assert 'quasi-likelihood' in model.flags
    with pytest.raises(QuasiLikelihoodOnly):
        information_criteria(model)


@pytest.mark.parametrize('power', [1.2, 1.5, 1.8])
def test_tweedie_density_integrates_to_one(power):
    mu, phi = 2.0, 1.3

    def density(y):
        return float(np.exp(tweedie_log_density(np.array([y]), np.array([mu]), phi, power))[0])

    zero_mass = float(np.exp(tweedie_log_density(np.array([0.0]), np.array([mu]), phi, power))[0])
    positive, _ = integrate.quad(density, 0, 80, limit=400)
    mean, _ = integrate.quad(lambda y: y * density(y), 0, 80, limit=400)
    assert zero_mass + positive == pytest.approx(1.0, abs=1e-5)
    assert mean == pytest.approx(mu, rel=1e-4)


def _compound_sample(levels, rate, shape, scale, n):
    """Compound Poisson-gamma totals, n draws at each covariate level."""
    x = np.repeat(levels, n)
    y = np.concatenate([simulate_compound(rate(v), shape(v), scale(v), n, seed=i) for i, v in enumerate(levels)])
    return x, y


def test_doubling_exposure_only_moves_the_intercept(panel):
    design = build_design(panel)
    doubled = DesignMatrix(x=design.x, covariates=design.covariates, response=design.response,
                           exposure=2 * design.exposure, offset=design.offset + np.log(2), weights=design.weights,
                           training_years=design.training_years)
    model, refit = fit_glm(design, 'poisson'), fit_glm(doubled, 'poisson')
    np.testing.assert_allclose(refit.coefficients[1:], model.coefficients[1:], atol=1e-6)
    assert refit.coefficients[0] == pytest.approx(model.coefficients[0] - np.log(2), abs=1e-6)
    np.testing.assert_allclose(refit.predict(design.x[:, 1:], doubled.exposure),
                               model.predict(design.x[:, 1:], design.exposure), rtol=1e-8)


def test_rescaling_a_covariate_rescales_its_coefficient(panel):
    design = build_design(panel)
    column = 1 + design.covariates.index('clay')
    x = design.x.copy()
    x[:, column] /= 100
    rescaled = DesignMatrix(x=x, covariates=design.covariates, response=design.response, exposure=design.exposure,
                            offset=design.offset, weights=design.weights, training_years=design.training_years)
    model, refit = fit_glm(design, 'poisson'), fit_glm(rescaled, 'poisson')
    assert refit.coefficients[column] == pytest.approx(100 * model.coefficients[column], rel=1e-6)
    np.testing.assert_allclose(refit.predict(x[:, 1:], design.exposure),
                               model.predict(design.x[:, 1:], design.exposure), rtol=1e-8)


def test_binomial_score_vanishes_at_the_estimate():
    rng = np.random.default_rng(8)
    x = rng.normal(size=2000)
    trials = rng.integers(200, 2000, 2000)
    y = rng.binomial(trials, expit(-4 + 0.6 * x))
    design = _design(x, y, trials)
    model = fit_glm(design, 'binomial')
    score = design.x.T @ (design.response - model.predict(x.reshape(-1, 1), trials))
    assert np.all(np.abs(score) <= 1e-6 * design.n)


def test_tweedie_recovers_a_compound_mean_on_held_out_rows():
    x, y = _compound_sample([-1.0, 0.0, 1.0, 2.0], rate=lambda v: np.exp(0.2 + 0.4 * v), shape=lambda v: 2.0,
                            scale=lambda v: 1.5, n=4000)
    model = fit_tweedie(_design(x, y), 1.5)
    held_out = np.linspace(-1.0, 2.0, 31)
    truth = 3.0 * np.exp(0.2 + 0.4 * held_out)
    np.testing.assert_allclose(model.predict(held_out.reshape(-1, 1)), truth, rtol=0.05)


def test_power_scan_finds_the_generating_power():
    # power 1.5 with unit dispersion: Poisson rate 2 sqrt(mu) of exponential claims with mean sqrt(mu) / 2
    def mean(v):
        return np.exp(0.5 + 0.5 * v)

    x, y = _compound_sample([-1.0, 0.0, 1.0, 2.0], rate=lambda v: 2 * np.sqrt(mean(v)), shape=lambda v: 1.0,
                            scale=lambda v: np.sqrt(mean(v)) / 2, n=3000)
    scan = power_scan(_design(x, y))
    assert len(scan.table) == 9
    assert scan.best_power in (1.4, 1.5, 1.6)


def test_a_noise_column_usually_raises_the_aic():
    rng = np.random.default_rng(9)
    raised = 0
    for _ in range(500):
        x = rng.normal(size=200)
        y = rng.poisson(np.exp(0.5 + 0.3 * x))
        base = fit_glm(_design(x, y), 'poisson')
        noisy = fit_glm(_design(np.column_stack([x, rng.normal(size=200)]), y), 'poisson')
        raised += noisy.aic > base.aic
    assert raised >= 0.8 * 500
