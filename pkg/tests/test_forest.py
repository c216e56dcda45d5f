import numpy as np
import pytest

from src.models import ForestParams, SplitMode, best_split, forest_fit, forest_predict, grow_tree
from src.models.tree import MIN_RELATIVE_GAIN
from src.synthetic import generate_panel
from src.utils.exceptions import InvalidParam, NoValidSplit
from tests.conftest import small_config

SMALL_FOREST = ForestParams(n_trees=6, mtry=2, min_leaf=20, max_nodes=16)


def _loss(y, exposure, mode):
    if mode == 'squared':
        return float(np.sum((y - y.mean()) ** 2))
    mu = exposure * y.sum() / exposure.sum()
    with np.errstate(divide='ignore', invalid='ignore'):
        log_ratio = np.where(y > 0, np.log(y / mu), 0.0)
    return float(2 * np.sum(y * log_ratio - (y - mu)))


def _split_gain(x, y, exposure, feature, threshold, mode):
    left = x[:, feature] <= threshold
    return _loss(y, exposure, mode) - _loss(y[left], exposure[left], mode) - _loss(y[~left], exposure[~left], mode)


def _brute_force_best(x, y, exposure, features, mode, min_leaf):
    best = -np.inf
    for feature in features:
        values = np.unique(x[:, feature])
        for threshold in (values[:-1] + values[1:]) / 2:
            n_left = int(np.sum(x[:, feature] <= threshold))
            if n_left >= min_leaf and y.size - n_left >= min_leaf:
                best = max(best, _split_gain(x, y, exposure, feature, threshold, mode))
    return best


@pytest.mark.parametrize('mode', ['squared', 'poisson'])
def test_best_split_matches_brute_force(mode):
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(100):
        n = int(rng.integers(12, 40))
        x = np.column_stack([rng.normal(size=n), rng.integers(0, 4, n), rng.uniform(size=n)])
        exposure = rng.uniform(10, 100, n)
        y = rng.poisson(0.02 * exposure * np.exp(x[:, 0])).astype(float)
        min_leaf = int(rng.integers(1, 6))
        best = _brute_force_best(x, y, exposure, [0, 1, 2], mode, min_leaf)
        scale = np.sum(y ** 2) if mode == 'squared' else np.sum(y)
        if not best > 2 * MIN_RELATIVE_GAIN * max(1.0, scale):
            continue
        split = best_split(x, y, exposure, [0, 1, 2], mode, min_leaf)
        assert split.gain == pytest.approx(best, rel=1e-8, abs=1e-8)
        assert _split_gain(x, y, exposure, split.feature, split.threshold, mode) == pytest.approx(best, rel=1e-8,
                                                                                                  abs=1e-8)
        checked += 1
    assert checked > 50


def test_best_split_prefers_lowest_feature_on_ties():
    x = np.column_stack([np.arange(10.0), np.arange(10.0)])
    y = np.array([0.0] * 5 + [1.0] * 5)
    split = best_split(x, y, np.ones(10), [1, 0], 'squared', 1)
    assert (split.feature, split.threshold) == (0, 4.5)


def test_no_valid_split():
    x = np.ones((10, 2))
    with pytest.raises(NoValidSplit):
        best_split(x, np.arange(10.0), np.ones(10), [0, 1], 'squared', 1)
    with pytest.raises(NoValidSplit):
        best_split(np.arange(6.0).reshape(-1, 1), np.arange(6.0), np.ones(6), [0], 'squared', 4)
    with pytest.raises(NoValidSplit):
        best_split(np.arange(10.0).reshape(-1, 1), np.full(10, 3.0), np.ones(10), [0], 'squared', 1)


@pytest.mark.parametrize('max_nodes', [1, 2, 7, 32])
def test_grow_tree_respects_max_nodes(max_nodes):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(400, 3))
    exposure = rng.uniform(10, 100, 400)
    y = rng.poisson(0.05 * exposure * np.exp(x[:, 0] - x[:, 1])).astype(float)
    tree = grow_tree(x, y, exposure, 'poisson', max_nodes, min_leaf=5, rng=rng)
    leaves = tree.leaves()
    assert 1 <= len(leaves) <= max_nodes
    assert all(leaf.n >= 5 for leaf in leaves)
    assert sum(leaf.n for leaf in leaves) == 400
    assert tree.value == pytest.approx(y.sum() / exposure.sum())


def test_forest_is_deterministic(panel):
    first = forest_fit(panel, SMALL_FOREST, 'poisson', seed=5, workers=1)
    again = forest_fit(panel.sample(frac=1.0, random_state=1), SMALL_FOREST, 'poisson', seed=5, workers=2)
    other = forest_fit(panel, SMALL_FOREST, 'poisson', seed=6, workers=1)
    rows = panel[panel['year'] == 2008]
    exposure = rows['exposure'].to_numpy(dtype=float)
    np.testing.assert_array_equal(first.predict(rows, exposure), again.predict(rows, exposure))
    assert first.model_id == again.model_id
    assert not np.array_equal(first.predict(rows, exposure), other.predict(rows, exposure))


def test_poisson_forest_scales_with_exposure(panel):
    forest = forest_fit(panel, SMALL_FOREST, 'poisson', seed=5, workers=1)
    rows = panel[panel['year'] == 2008]
    exposure = rows['exposure'].to_numpy(dtype=float)
    np.testing.assert_allclose(forest_predict(forest, rows, 2 * exposure), 2 * forest_predict(forest, rows, exposure))
    assert forest.family == 'rfp'


def test_squared_forest_predicts_counts(panel):
    forest = forest_fit(panel, SMALL_FOREST, SplitMode.squared, seed=5, workers=1)
    rows = panel[panel['year'] == 2008]
    predicted = forest.predict(rows)
    assert forest.family == 'rf'
    assert np.all(predicted >= 0)
    assert predicted.max() <= panel['claims'].max()


@pytest.mark.parametrize('params', [ForestParams(n_trees=0), ForestParams(mtry=0), ForestParams(mtry=6),
                                    ForestParams(min_leaf=0)])
def test_forest_params_are_validated(params):
    with pytest.raises(InvalidParam):
        params.validate(5)


def test_forest_predicts_the_mean_tree(panel):
    forest = forest_fit(panel, SMALL_FOREST, 'poisson', seed=5, workers=1)
    rows = panel[panel['year'] == 2008]
    x = rows[list(forest.covariates)].to_numpy(dtype=float)
    exposure = rows['exposure'].to_numpy(dtype=float)
    mean_rate = np.mean([tree.predict(x) for tree in forest.trees], axis=0)
    np.testing.assert_allclose(forest_predict(forest, rows, exposure), exposure * mean_rate, rtol=1e-12)


def test_out_of_bag_deviance_beats_the_overall_rate():
    params = ForestParams(n_trees=10, mtry=3, min_leaf=50, max_nodes=16)
    better = 0
    for seed in range(20):
        panel = generate_panel(small_config(seed=seed, n_towns=150), workers=1).panel
        forest = forest_fit(panel, params, 'poisson', seed=seed, workers=1)
        better += forest.oob_deviance <= forest.null_deviance
    assert better >= 19
