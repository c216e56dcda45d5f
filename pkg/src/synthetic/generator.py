import logging
import typing as tp
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed
from scipy.special import expit

from config import GeneralConfig, PathConfig, SyntheticConfig
from src.ingest import build_panel, write_panel
from src.utils.exceptions import InvalidConfig
from src.utils.io import write_frame

logger = logging.getLogger(__name__)

TRUTH_COVARIATES = ('essti', 'esswi', 'clay', 'cat', 'espi')
FAMILIES = ('poisson', 'binomial', 'negbin', 'zip', 'zinb')
INDEX_NAMES = ('espi', 'esswi', 'essti')
TOWN_BLOCK = 500


@dataclass(frozen=True)
class GeneratorConfig:
    """Truth and covariate laws of a synthetic panel; unset fields take the `SyntheticConfig` values."""
    seed: int = None
    n_towns: int = None
    first_year: int = None
    last_year: int = None
    history_start: int = None
    n_regions: int = None
    exposure_log_mean: float = None
    exposure_log_sd: float = None
    clay_beta: tp.Tuple[float, float] = None
    year_shock_weight: float = None
    region_shock_weight: float = None
    essti_esswi_correlation: float = None
    espi_esswi_correlation: float = None
    cat_request_rate: float = None
    insured_value: float = None
    family: str = None
    frequency_coefficients: tp.Tuple[float, ...] = None
    zero_coefficients: tp.Tuple[float, ...] = None
    negbin_size: float = None
    severity_mean: float = None
    severity_shape: float = None

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) is None:
                default = GeneralConfig.SEED if f.name == 'seed' else getattr(SyntheticConfig, f.name.upper())
                object.__setattr__(self, f.name, default)
        for name in ['clay_beta', 'frequency_coefficients', 'zero_coefficients']:
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self._validate()

    def _validate(self):
        problems = []
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            problems.append(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.n_towns < 1 or self.n_regions < 1:
            problems.append("n_towns and n_regions must be positive")
        if not self.history_start <= self.first_year <= self.last_year:
            problems.append(f"need history_start <= first_year <= last_year, got "
                            f"{self.history_start}, {self.first_year}, {self.last_year}")
        if self.exposure_log_sd < 0:
            problems.append("exposure_log_sd must be non-negative")
        if len(self.clay_beta) != 2 or min(self.clay_beta) <= 0:
            problems.append(f"clay_beta must hold two positive values, got {self.clay_beta}")
        if min(self.year_shock_weight, self.region_shock_weight) < 0 \
                or self.year_shock_weight + self.region_shock_weight > 1:
            problems.append("shock weights must be non-negative with a sum of at most 1")
        if not all(-1 < r < 1 for r in (self.essti_esswi_correlation, self.espi_esswi_correlation)):
            problems.append("index correlations must lie in (-1, 1)")
        if not 0 <= self.cat_request_rate <= 1:
            problems.append("cat_request_rate must lie in [0, 1]")
        if self.family not in FAMILIES:
            problems.append(f"family must be one of {', '.join(FAMILIES)}, got '{self.family}'")
        for name in ['frequency_coefficients', 'zero_coefficients']:
            values = getattr(self, name)
            if len(values) != len(TRUTH_COVARIATES) + 1 or not np.all(np.isfinite(values)):
                problems.append(f"{name} needs {len(TRUTH_COVARIATES) + 1} finite values")
        if min(self.negbin_size, self.severity_mean, self.severity_shape, self.insured_value) <= 0:
            problems.append("negbin_size, severity_mean, severity_shape and insured_value must be positive")
        if problems:
            raise InvalidConfig("; ".join(problems))

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.first_year, self.last_year + 1)

    @property
    def index_cholesky(self) -> np.ndarray:
        """Cholesky factor of the (espi, esswi, essti) correlation matrix."""
        a, b = self.espi_esswi_correlation, self.essti_esswi_correlation
        correlation = np.array([[1.0, a, a * b], [a, 1.0, b], [a * b, b, 1.0]])
        return np.linalg.cholesky(correlation)


@dataclass(frozen=True)
class Truth:
    family: str
    covariates: tp.Tuple[str, ...]
    coefficients: tp.Tuple[float, ...]
    zero_coefficients: tp.Optional[tp.Tuple[float, ...]]
    theta: tp.Optional[float]
    severity_mean: float
    severity_shape: float
    seed: int
    n_rows: int
    zero_share: float
    total_claims: int
    total_cost: float

    @property
    def is_zero_inflated(self) -> bool:
        return self.family in ('zip', 'zinb')

    def write(self, path: tp.Union[str, Path]) -> Path:
        path = Path(path)
        PathConfig.mkdir(path.parent)
        content = {key: list(value) if isinstance(value, tuple) else value for key, value in asdict(self).items()}
        with open(path, 'w', newline='\n') as f:
            yaml.safe_dump(content, f, sort_keys=False)
        return path


def read_truth(path: tp.Union[str, Path]) -> Truth:
    with open(path) as f:
        content = yaml.safe_load(f)
    for key in ['covariates', 'coefficients', 'zero_coefficients']:
        if content.get(key) is not None:
            content[key] = tuple(content[key])
    return Truth(**content)


@dataclass(frozen=True)
class SyntheticPanel:
    """Generated panel with the raw inputs it is built from and its truth."""
    panel: pd.DataFrame
    exposure: pd.DataFrame
    claims: pd.DataFrame
    indices: pd.DataFrame
    clay: pd.DataFrame
    cat_history: pd.DataFrame
    regions: pd.DataFrame
    truth: Truth

    def write(self, output_dir: tp.Union[str, Path]) -> tp.List[Path]:
        output_dir = Path(output_dir)
        paths = [write_panel(self.panel, output_dir / 'panel.csv')]
        for name in ['exposure', 'claims', 'indices', 'clay', 'cat_history', 'regions']:
            paths.append(write_frame(getattr(self, name), output_dir / f"{name}.csv"))
        paths.append(self.truth.write(output_dir / 'truth.yaml'))
        return paths


def _shared_shocks(config: GeneratorConfig) -> tp.Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([config.seed, 0])
    chol = config.index_cholesky
    n_years = config.years.size
    year = rng.standard_normal((n_years, 3)) @ chol.T
    region = rng.standard_normal((config.n_regions, n_years, 3)) @ chol.T
    return year, region


def _counts(config: GeneratorConfig, rng: np.random.Generator, x: np.ndarray, exposure: int) -> np.ndarray:
    eta = config.frequency_coefficients[0] + x @ np.asarray(config.frequency_coefficients[1:])
    if config.family == 'binomial':
        return rng.binomial(exposure, expit(eta))
    mean = exposure * np.exp(eta)
    if config.family in ('negbin', 'zinb'):
        theta = config.negbin_size
        counts = rng.negative_binomial(theta, theta / (theta + mean))
    else:
        counts = rng.poisson(mean)
    if config.family in ('zip', 'zinb'):
        zero_eta = config.zero_coefficients[0] + x @ np.asarray(config.zero_coefficients[1:])
        counts = np.where(rng.random(eta.size) < expit(zero_eta), 0, counts)
    return counts


def _town(config: GeneratorConfig, i: int, year_shocks: np.ndarray, region_shocks: np.ndarray) -> tp.Dict:
    """One town over all panel years, drawn from its own stream so any worker split gives the same panel."""
    rng = np.random.default_rng([config.seed, 1, i])
    years = config.years
    region = int(rng.integers(config.n_regions))
    exposure = max(1, int(round(float(np.exp(rng.normal(config.exposure_log_mean, config.exposure_log_sd))))))
    clay = 100.0 * rng.beta(*config.clay_beta)

    noise = rng.standard_normal((years.size, 3)) @ config.index_cholesky.T
    wy, wr = config.year_shock_weight, config.region_shock_weight
    index = np.sqrt(wy) * year_shocks + np.sqrt(wr) * region_shocks[region] + np.sqrt(1 - wy - wr) * noise

    history_years = np.arange(config.history_start, config.last_year + 1)
    requests = history_years[rng.random(history_years.size) < config.cat_request_rate]
    cat = (years > requests.min()).astype(int) if requests.size else np.zeros(years.size, dtype=int)

    espi, esswi, essti = index[:, 0], index[:, 1], index[:, 2]
    x = np.column_stack([essti, esswi, np.full(years.size, clay), cat, espi])
    claims = _counts(config, rng, x, exposure)
    cost = np.zeros(years.size)
    claimed = claims > 0
    cost[claimed] = rng.gamma(claims[claimed] * config.severity_shape, config.severity_mean / config.severity_shape)
    return {'region': region, 'exposure': exposure, 'clay': clay, 'espi': espi, 'esswi': esswi, 'essti': essti,
            'cat': cat, 'claims': claims, 'cost': np.round(cost, 2), 'requests': requests}


def _town_block(config: GeneratorConfig, towns: range, year_shocks: np.ndarray,
                region_shocks: np.ndarray) -> tp.List[tp.Tuple[str, tp.Dict]]:
    return [(town_id(i), _town(config, i, year_shocks, region_shocks)) for i in towns]


def town_id(i: int) -> str:
    return f"{i + 1:05d}"


def generate_panel(config: GeneratorConfig = None, workers: int = None) -> SyntheticPanel:
    """
    Draw a town-year panel from a known frequency model and gamma claim costs.
    Indices are standard normal per town-year, built from a yearly shock, a region-year shock and town noise.
    The panel goes through `build_panel` like real inputs.
    """
    config = config or GeneratorConfig()
    workers = workers or GeneralConfig.WORKERS
    year_shocks, region_shocks = _shared_shocks(config)
    blocks = [range(start, min(start + TOWN_BLOCK, config.n_towns)) for start in range(0, config.n_towns, TOWN_BLOCK)]
    drawn = Parallel(n_jobs=min(workers, len(blocks)))(
        delayed(_town_block)(config, block, year_shocks, region_shocks) for block in blocks)
    towns = [item for block in drawn for item in block]

    years = config.years
    n_years = years.size
    ids = np.repeat([t for t, _ in towns], n_years)
    all_years = np.tile(years, len(towns))

    def stacked(name: str) -> np.ndarray:
        return np.concatenate([d[name] for _, d in towns])

    exposure_per_town = np.array([d['exposure'] for _, d in towns])
    exposure = pd.DataFrame({'town_id': ids, 'year': all_years, 'exposure': np.repeat(exposure_per_town, n_years),
                             'sums_insured': np.repeat(exposure_per_town * config.insured_value, n_years)})
    claims = pd.DataFrame({'town_id': ids, 'year': all_years, 'claims': stacked('claims'), 'cost': stacked('cost')})
    claims = claims[claims['claims'] > 0].reset_index(drop=True)
    indices = pd.DataFrame({'town_id': ids, 'year': all_years, 'espi': stacked('espi'), 'esswi': stacked('esswi'),
                            'essti': stacked('essti')})
    clay = pd.DataFrame({'town_id': [t for t, _ in towns], 'clay': [d['clay'] for _, d in towns]})
    cat_history = pd.DataFrame([(t, int(y)) for t, d in towns for y in d['requests']], columns=['town_id', 'year'])
    regions = pd.DataFrame({'town_id': [t for t, _ in towns], 'region': [f"R{d['region'] + 1:02d}" for _, d in towns]})

    panel = build_panel(exposure, claims, indices, clay, cat_history)
    zero_inflated = config.family in ('zip', 'zinb')
    truth = Truth(family=config.family, covariates=TRUTH_COVARIATES, coefficients=config.frequency_coefficients,
                  zero_coefficients=config.zero_coefficients if zero_inflated else None,
                  theta=config.negbin_size if config.family in ('negbin', 'zinb') else None,
                  severity_mean=config.severity_mean, severity_shape=config.severity_shape, seed=int(config.seed),
                  n_rows=len(panel), zero_share=float((panel['claims'] == 0).mean()),
                  total_claims=int(panel['claims'].sum()), total_cost=float(panel['cost_cents'].sum()) / 100.0)
    logger.info(f"Synthetic {config.family} panel: {truth.n_rows} town-years, {truth.total_claims} claims, "
                f"zero share {truth.zero_share:.3f}")
    return SyntheticPanel(panel=panel, exposure=exposure, claims=claims, indices=indices, clay=clay,
                          cat_history=cat_history, regions=regions, truth=truth)
