import logging
import typing as tp
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config import ForestConfig, GeneralConfig, GlmConfig
from src.utils.exceptions import InvalidParam
from . import metrics
from .base_model import BaseModel, Covariates, exposure_vector
from .tree import SplitMode, SplitNode, grow_tree

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = None
    mtry: int = None
    min_leaf: int = None
    max_nodes: int = None
    bootstrap: bool = None

    def __post_init__(self):
        defaults = {'n_trees': ForestConfig.N_TREES, 'mtry': ForestConfig.MTRY, 'min_leaf': ForestConfig.MIN_LEAF,
                    'max_nodes': ForestConfig.MAX_NODES, 'bootstrap': ForestConfig.BOOTSTRAP}
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)

    def validate(self, n_features: int):
        if self.n_trees < 1:
            raise InvalidParam(f"A forest needs at least one tree, got {self.n_trees}")
        if not 1 <= self.mtry <= n_features:
            raise InvalidParam(f"mtry must lie in [1, {n_features}], got {self.mtry}")
        if self.min_leaf < 1 or self.max_nodes < 1:
            raise InvalidParam(f"min_leaf and max_nodes must be positive, got {self.min_leaf}, {self.max_nodes}")


@dataclass(frozen=True)
class Forest(BaseModel):
    trees: tp.Tuple[SplitNode, ...]
    mode: SplitMode
    covariates: tp.Tuple[str, ...]
    params: ForestParams
    seed: int
    tree_seeds: tp.Tuple[int, ...]
    training_years: tp.Tuple[int, int]
    n: int = 0
    oob_deviance: float = float('nan')
    oob_mse: float = float('nan')
    null_deviance: float = float('nan')
    flags: tp.Tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, 'mode', SplitMode(self.mode))
        object.__setattr__(self, 'trees', tuple(self.trees))

    @property
    def family(self) -> str:
        return 'rfp' if self.mode is SplitMode.poisson else 'rf'

    def tree_predictions(self, covariates: Covariates) -> np.ndarray:
        """Leaf value of every tree, one row per tree."""
        x = self._matrix(covariates)
        return np.vstack([tree.predict(x) for tree in self.trees])

    def predict(self, covariates: Covariates, exposure=None) -> np.ndarray:
        return forest_predict(self, covariates, exposure)

    def _fingerprint(self) -> tp.Tuple:
        return super()._fingerprint() + (self.params, self.seed, self.n)


def _tree_seeds(seed: int, n_trees: int) -> tp.Tuple[int, ...]:
    return tuple(int(s) for s in np.random.SeedSequence(seed).generate_state(n_trees))


def _grow(x, y, exposure, mode, params: ForestParams, tree_seed: int) -> tp.Tuple[SplitNode, np.ndarray]:
    rng = np.random.default_rng(tree_seed)
    n = y.size
    sample = rng.integers(0, n, n) if params.bootstrap else np.arange(n)
    tree = grow_tree(x[sample], y[sample], exposure[sample], mode, params.max_nodes, params.min_leaf,
                     params.mtry, rng)
    in_bag = np.zeros(n, dtype=bool)
    in_bag[sample] = True
    return tree, in_bag


def forest_fit(panel: pd.DataFrame, params: ForestParams = None, mode: tp.Union[SplitMode, str] = 'poisson',
               seed: int = None, covariates: tp.Sequence[str] = None, workers: int = None) -> Forest:
    """
    Bagged regression trees on the claim counts of the panel.
    Rows are ordered by (town_id, year) before resampling so the forest does not depend on the input order.
    :param mode: 'poisson' splits on Poisson deviance with exposure offsets, 'squared' on the sum of squares
    """
    mode = SplitMode(mode)
    params = params or ForestParams()
    covariates = tuple(covariates or GlmConfig.COVARIATES)
    params.validate(len(covariates))
    seed = GeneralConfig.SEED if seed is None else seed
    workers = workers or GeneralConfig.WORKERS

    years = (int(panel['year'].min()), int(panel['year'].max()))
    panel = panel[panel['exposure'] > 0].sort_values(['town_id', 'year'], kind='mergesort')
    x = panel[list(covariates)].to_numpy(dtype=float)
    y = panel['claims'].to_numpy(dtype=float)
    exposure = panel['exposure'].to_numpy(dtype=float)
    seeds = _tree_seeds(seed, params.n_trees)

    grown = Parallel(n_jobs=workers)(delayed(_grow)(x, y, exposure, mode, params, s) for s in seeds)
    trees = [tree for tree, _ in grown]

    forest = Forest(trees=tuple(trees), mode=mode, covariates=covariates, params=params, seed=seed, tree_seeds=seeds,
                    training_years=years, n=int(y.size))
    oob = _out_of_bag(forest, x, y, exposure, [in_bag for _, in_bag in grown])
    logger.info(f"{forest.family}: {params.n_trees} trees on {y.size} rows, OOB deviance {oob[0]:.6g} "
                f"(intercept-only {oob[2]:.6g})")
    return replace(forest, oob_deviance=oob[0], oob_mse=oob[1], null_deviance=oob[2])


def _out_of_bag(forest: Forest, x, y, exposure, in_bag: tp.List[np.ndarray]) -> tp.Tuple[float, float, float]:
    """Deviance and squared error of out-of-bag predictions, with the deviance of the overall rate on the same rows."""
    totals, counts = np.zeros(y.size), np.zeros(y.size)
    for tree, bag in zip(forest.trees, in_bag):
        rows = np.flatnonzero(~bag)
        if rows.size:
            totals[rows] += tree.predict(x[rows])
            counts[rows] += 1
    covered = counts > 0
    if not covered.any():
        return float('nan'), float('nan'), float('nan')
    prediction = totals[covered] / counts[covered]
    if forest.mode is SplitMode.poisson:
        prediction = prediction * exposure[covered]
    observed = y[covered]
    null = exposure[covered] * observed.sum() / exposure[covered].sum()
    with np.errstate(divide='ignore'):
        deviance = metrics.poisson_deviance(observed, prediction)
    return deviance, metrics.mse(observed, prediction), metrics.poisson_deviance(observed, null)


def forest_predict(forest: Forest, covariates: Covariates, exposure=None) -> np.ndarray:
    """Mean leaf value over trees; in poisson mode the mean rate times exposure."""
    mean = forest.tree_predictions(covariates).mean(axis=0)
    if forest.mode is SplitMode.poisson:
        return exposure_vector(exposure, mean.shape[0]) * mean
    return mean
