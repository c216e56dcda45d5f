import os
import typing as tp
from pathlib import Path

import yaml


class GeneralConfig:
    ARTIFACT_VERSION = '1.0.0'
    SEED = 2018
    FLOAT_FORMAT = '%.9g'
    WORKERS = os.cpu_count() or 1


OUTPUT_PATH = "data/output"


class PathConfig:
    INDICES_PATH = f'{OUTPUT_PATH}/indices'
    PANEL_PATH = f'{OUTPUT_PATH}/panel'
    MODELS_PATH = f'{OUTPUT_PATH}/models'
    PREDICTIONS_PATH = f'{OUTPUT_PATH}/predictions'
    CV_PATH = f'{OUTPUT_PATH}/cv'
    SYNTH_PATH = f'{OUTPUT_PATH}/synth'
    MAPS_PATH = f'{OUTPUT_PATH}/maps'
    REPORT_PATH = f'{OUTPUT_PATH}/report'
    MANIFEST_NAME = 'manifest.yaml'

    @staticmethod
    def mkdir(_path: tp.Union[str, Path]):
        Path(_path).mkdir(parents=True, exist_ok=True)


class IndexConfig:
    REFERENCE_START = None  # None means first year present in the input
    REFERENCE_END = None
    WINDOW = 3  # months
    MIN_POSITIVE_VALUES = 10
    CLAMP = 5.0
    VARIANCE_FLOOR_CV = 0.1  # method-of-moments fallback: sd >= 10% of the mean
    MLE_MAX_ITER = 100
    MLE_TOLERANCE = 1e-12
    TEMPERATURE_SHIFT = 1.0  # kelvin below the reference minimum


class GlmConfig:
    COVARIATES = ('essti', 'esswi', 'clay', 'cat', 'espi')
    MAX_ITER = 100
    TOLERANCE = 1e-10
    MAX_HALVING = 30
    NEGBIN_LOG_THETA_BRACKET = (-3.0, 8.0)
    TWEEDIE_DENSITY = True
    TWEEDIE_SERIES_TOLERANCE = 1e-10


class ZeroInflatedConfig:
    ZERO_COVARIATES = ('essti', 'esswi', 'clay', 'cat', 'espi')
    ZERO_EXPOSURE = False  # add log-exposure as a column of the logistic block
    MAX_ITER = 500
    TOLERANCE = 1e-9
    EM_MAX_ITER = 200
    BOUNDARY_PROBABILITY = 1e-3
    BOUNDARY_LEVEL = 0.01  # likelihood-ratio test of the zero block against the count family
    DIVERGENCE_LIMIT = 50.0  # largest zero-block coefficient before it counts as running off


class ForestConfig:
    N_TREES = 200
    MTRY = 3
    MIN_LEAF = 50
    MAX_NODES = 512
    BOOTSTRAP = True


class CostConfig:
    SEVERITY_COVARIATES = ('essti', 'esswi', 'clay', 'cat', 'espi')
    TWEEDIE_COVARIATES = ('essti', 'esswi', 'clay', 'cat')
    TWEEDIE_POWER = 1.5
    TWEEDIE_POWER_GRID = (1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9)


class ValidationConfig:
    FIRST_TEST_YEAR = 2003
    LAST_TEST_YEAR = 2018
    PRUNE_GRID = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
    COUNT_METRIC = 'deviance'  # 'deviance' or 'rmse'
    SPATIAL_FOLDS = 5


class SyntheticConfig:
    N_TOWNS = 2000
    FIRST_YEAR = 2001
    LAST_YEAR = 2018
    HISTORY_START = 1989
    N_REGIONS = 10
    EXPOSURE_LOG_MEAN = 6.5
    EXPOSURE_LOG_SD = 1.2
    CLAY_BETA = (2.0, 5.0)
    YEAR_SHOCK_WEIGHT = 0.4  # shares of index variance, the rest is town noise
    REGION_SHOCK_WEIGHT = 0.3
    ESSTI_ESSWI_CORRELATION = -0.5
    ESPI_ESSWI_CORRELATION = 0.5
    CAT_REQUEST_RATE = 0.01
    INSURED_VALUE = 250000.0  # per house
    FAMILY = 'poisson'  # poisson, binomial, negbin, zip or zinb
    # Intercept, ESSTI, ESSWI, clay, cat, ESPI fitted on 2001-2018
    FREQUENCY_COEFFICIENTS = (-14.357, 1.661, -0.707, 0.035, 3.902, -0.048)
    ZERO_COEFFICIENTS = (1.5, -0.8, 0.4, -0.01, -1.0, 0.0)
    NEGBIN_SIZE = 0.5
    CLIMATE_CELLS = 4
    CLIMATE_FIRST_YEAR = 1981
    SEVERITY_MEAN = 16300.0
    SEVERITY_SHAPE = 2.0


_SECTIONS: tp.Dict[str, type] = {
    'general': GeneralConfig,
    'paths': PathConfig,
    'index': IndexConfig,
    'glm': GlmConfig,
    'zero_inflated': ZeroInflatedConfig,
    'forest': ForestConfig,
    'cost': CostConfig,
    'validation': ValidationConfig,
    'synthetic': SyntheticConfig,
}


def _constants(section: type) -> tp.Dict[str, tp.Any]:
    return {name: value for name, value in vars(section).items() if name.isupper()}


def load_config(path: tp.Union[str, Path]) -> tp.Dict[str, tp.Dict[str, tp.Any]]:
    """
    Override the constants of the config classes with the values of a YAML file.
    :param path: YAML file whose sections are the keys of `_SECTIONS` and whose keys are lower-cased constant names
    :return: the applied overrides
    """
    from src.utils.exceptions import InvalidConfig

    with open(path) as f:
        content = yaml.safe_load(f) or {}
    if not isinstance(content, dict):
        raise InvalidConfig(f"Config file {path} must hold a mapping of sections")

    for section_name, values in content.items():
        if section_name not in _SECTIONS:
            raise InvalidConfig(f"Unknown config section '{section_name}'")
        section = _SECTIONS[section_name]
        known = _constants(section)
        for key, value in (values or {}).items():
            name = key.upper()
            if name not in known:
                raise InvalidConfig(f"Unknown key '{key}' in config section '{section_name}'")
            if isinstance(known[name], tuple) and isinstance(value, list):
                value = tuple(value)
            setattr(section, name, value)
    return content


def dump_config() -> tp.Dict[str, tp.Dict[str, tp.Any]]:
    return {
        name: {key.lower(): list(value) if isinstance(value, tuple) else value
               for key, value in _constants(section).items()}
        for name, section in _SECTIONS.items()
    }
