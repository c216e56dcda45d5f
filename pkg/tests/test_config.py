import pytest
import yaml

from config import ForestConfig, GeneralConfig, ValidationConfig, dump_config, load_config
from src.utils.exceptions import InvalidConfig


def test_overrides_apply(tmp_path):
    path = tmp_path / 'config.yaml'
    path.write_text(yaml.safe_dump({'forest': {'n_trees': 7}, 'validation': {'prune_grid': [0.0, 0.5]}}))
    load_config(path)
    assert ForestConfig.N_TREES == 7
    assert ValidationConfig.PRUNE_GRID == (0.0, 0.5)
    assert dump_config()['forest']['n_trees'] == 7


def test_empty_file_changes_nothing(tmp_path):
    path = tmp_path / 'config.yaml'
    path.write_text('')
    seed = GeneralConfig.SEED
    assert load_config(path) == {}
    assert GeneralConfig.SEED == seed


@pytest.mark.parametrize('content', [{'no_such_section': {}}, {'glm': {'no_such_key': 1}}, ['not', 'a', 'mapping']])
def test_unknown_entries_are_rejected(tmp_path, content):
    path = tmp_path / 'config.yaml'
    path.write_text(yaml.safe_dump(content))
    with pytest.raises(InvalidConfig):
        load_config(path)
