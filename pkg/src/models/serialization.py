import typing as tp
from pathlib import Path

import numpy as np

from config import GeneralConfig, PathConfig
from src.utils.exceptions import InvalidParam, MissingModel
from .base_model import BaseModel
from .forest import Forest, ForestParams
from .glm import FittedGlm
from .tree import SplitNode
from .zero_inflated import ZeroInflatedModel

FORMAT_VERSION = 1
_NONE = 'none'


def _number(value: tp.Optional[float]) -> str:
    return _NONE if value is None else repr(float(value))


def _numbers(values) -> str:
    return ','.join(repr(float(v)) for v in values)


def _names(values) -> str:
    return ','.join(values)


def _parse_number(text: str) -> tp.Optional[float]:
    return None if text == _NONE else float(text)


def _parse_numbers(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(',')]) if text else np.empty(0)


def _parse_names(text: str) -> tp.Tuple[str, ...]:
    return tuple(v for v in text.split(',') if v)


def _glm_lines(model: FittedGlm) -> tp.List[tp.Tuple[str, str]]:
    return [('kind', 'glm'), ('family', model.family.value), ('covariates', _names(model.covariates)),
            ('training_years', f"{model.training_years[0]},{model.training_years[1]}"),
            ('coefficients', _numbers(model.coefficients)), ('standard_errors', _numbers(model.standard_errors)),
            ('log_likelihood', _number(model.log_likelihood)), ('deviance', _number(model.deviance)),
            ('n', str(model.n)), ('k', str(model.k)), ('theta', _number(model.theta)),
            ('dispersion', _number(model.dispersion)), ('tweedie_power', _number(model.tweedie_power)),
            ('iterations', str(model.iterations)), ('flags', ';'.join(model.flags))]


def _zero_inflated_lines(model: ZeroInflatedModel) -> tp.List[tp.Tuple[str, str]]:
    return [('kind', 'zero_inflated'), ('family', model.family.value), ('covariates', _names(model.covariates)),
            ('zero_covariates', _names(model.zero_covariates)),
            ('training_years', f"{model.training_years[0]},{model.training_years[1]}"),
            ('count_coefficients', _numbers(model.count_coefficients)),
            ('count_standard_errors', _numbers(model.count_standard_errors)),
            ('zero_coefficients', _numbers(model.zero_coefficients)),
            ('zero_standard_errors', _numbers(model.zero_standard_errors)),
            ('theta', _number(model.theta)), ('theta_standard_error', _number(model.theta_standard_error)),
            ('log_likelihood', _number(model.log_likelihood)), ('n', str(model.n)), ('k', str(model.k)),
            ('method', model.method), ('boundary', str(model.boundary).lower()), ('flags', ';'.join(model.flags))]


def _forest_lines(forest: Forest) -> tp.List[tp.Tuple[str, str]]:
    params = forest.params
    lines = [('kind', 'forest'), ('mode', forest.mode.value), ('covariates', _names(forest.covariates)),
             ('training_years', f"{forest.training_years[0]},{forest.training_years[1]}"),
             ('n_trees', str(params.n_trees)), ('mtry', str(params.mtry)), ('min_leaf', str(params.min_leaf)),
             ('max_nodes', str(params.max_nodes)), ('bootstrap', str(params.bootstrap).lower()),
             ('seed', str(forest.seed)), ('tree_seeds', ','.join(str(s) for s in forest.tree_seeds)),
             ('n', str(forest.n)), ('oob_deviance', _number(forest.oob_deviance)),
             ('oob_mse', _number(forest.oob_mse)), ('null_deviance', _number(forest.null_deviance))]
    # node = tree, id, feature, threshold, left, right, n, sum_y, sum_exposure, value, gain
    for t, tree in enumerate(forest.trees):
        nodes = list(tree.nodes())
        ids = {id(node): i for i, node in enumerate(nodes)}
        for i, node in enumerate(nodes):
            split = ['-1', '', '', ''] if node.is_leaf else [str(node.feature), repr(node.threshold),
                                                             str(ids[id(node.left)]), str(ids[id(node.right)])]
            lines.append(('node', ','.join([str(t), str(i)] + split + [str(node.n), repr(node.sum_y),
                                                                        repr(node.sum_exposure), repr(node.value),
                                                                        repr(node.gain)])))
    return lines


def save_model(model: BaseModel, path: tp.Union[str, Path]) -> Path:
    if isinstance(model, FittedGlm):
        lines = _glm_lines(model)
    elif isinstance(model, ZeroInflatedModel):
        lines = _zero_inflated_lines(model)
    elif isinstance(model, Forest):
        lines = _forest_lines(model)
    else:
        raise InvalidParam(f"Cannot serialize {type(model).__name__}")
    path = Path(path)
    PathConfig.mkdir(path.parent)
    header = [('format_version', str(FORMAT_VERSION)), ('artifact_version', GeneralConfig.ARTIFACT_VERSION)]
    with open(path, 'w', newline='\n') as f:
        f.writelines(f"{key} = {value}\n" for key, value in header + lines)
    return path


def _read(path: Path) -> tp.Tuple[tp.Dict[str, str], tp.List[str]]:
    fields, nodes = {}, []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip('\n')
            if not line.strip() or line.startswith('#'):
                continue
            key, separator, value = line.partition(' = ')
            if not separator:
                raise InvalidParam(f"{path}:{number}: expected 'key = value'")
            if key == 'node':
                nodes.append(value)
            else:
                fields[key] = value
    return fields, nodes


def _years(text: str) -> tp.Tuple[int, int]:
    first, last = text.split(',')
    return int(first), int(last)


def _load_forest(fields: tp.Dict[str, str], nodes: tp.List[str]) -> Forest:
    params = ForestParams(n_trees=int(fields['n_trees']), mtry=int(fields['mtry']), min_leaf=int(fields['min_leaf']),
                          max_nodes=int(fields['max_nodes']), bootstrap=fields['bootstrap'] == 'true')
    trees: tp.Dict[int, tp.Dict[int, tp.Tuple[SplitNode, tp.Optional[int], tp.Optional[int]]]] = {}
    for value in nodes:
        t, i, feature, threshold, left, right, n, sum_y, sum_exposure, leaf_value, gain = value.split(',')
        node = SplitNode(n=int(n), sum_y=float(sum_y), sum_exposure=float(sum_exposure), value=float(leaf_value),
                         gain=float(gain))
        if int(feature) >= 0:
            node.feature, node.threshold = int(feature), float(threshold)
        trees.setdefault(int(t), {})[int(i)] = (node, int(left) if left else None, int(right) if right else None)
    roots = []
    for t in sorted(trees):
        table = trees[t]
        for node, left, right in table.values():
            if left is not None:
                node.left, node.right = table[left][0], table[right][0]
        roots.append(table[0][0])
    if len(roots) != params.n_trees:
        raise InvalidParam(f"Forest file holds {len(roots)} trees, header says {params.n_trees}")
    return Forest(trees=tuple(roots), mode=fields['mode'], covariates=_parse_names(fields['covariates']),
                  params=params, seed=int(fields['seed']),
                  tree_seeds=tuple(int(s) for s in fields['tree_seeds'].split(',')),
                  training_years=_years(fields['training_years']), n=int(fields['n']),
                  oob_deviance=_parse_number(fields['oob_deviance']), oob_mse=_parse_number(fields['oob_mse']),
                  null_deviance=_parse_number(fields['null_deviance']))


def load_model(path: tp.Union[str, Path]) -> BaseModel:
    path = Path(path)
    if not path.exists():
        raise MissingModel(f"No model file {path}")
    fields, nodes = _read(path)
    if fields.get('format_version') != str(FORMAT_VERSION):
        raise InvalidParam(f"{path}: unsupported model format version {fields.get('format_version')}")
    kind = fields.get('kind')
    flags = tuple(f for f in fields.get('flags', '').split(';') if f)
    if kind == 'glm':
        return FittedGlm(family=fields['family'], covariates=_parse_names(fields['covariates']),
                         coefficients=_parse_numbers(fields['coefficients']),
                         standard_errors=_parse_numbers(fields['standard_errors']),
                         log_likelihood=_parse_number(fields['log_likelihood']),
                         deviance=_parse_number(fields['deviance']), n=int(fields['n']), k=int(fields['k']),
                         training_years=_years(fields['training_years']), theta=_parse_number(fields['theta']),
                         dispersion=_parse_number(fields['dispersion']),
                         tweedie_power=_parse_number(fields['tweedie_power']), iterations=int(fields['iterations']),
                         flags=flags)
    if kind == 'zero_inflated':
        return ZeroInflatedModel(family=fields['family'], covariates=_parse_names(fields['covariates']),
                                 zero_covariates=_parse_names(fields['zero_covariates']),
                                 count_coefficients=_parse_numbers(fields['count_coefficients']),
                                 zero_coefficients=_parse_numbers(fields['zero_coefficients']),
                                 count_standard_errors=_parse_numbers(fields['count_standard_errors']),
                                 zero_standard_errors=_parse_numbers(fields['zero_standard_errors']),
                                 log_likelihood=float(fields['log_likelihood']), n=int(fields['n']),
                                 k=int(fields['k']), training_years=_years(fields['training_years']),
                                 theta=_parse_number(fields['theta']),
                                 theta_standard_error=_parse_number(fields['theta_standard_error']),
                                 method=fields['method'], boundary=fields['boundary'] == 'true', flags=flags)
    if kind == 'forest':
        return _load_forest(fields, nodes)
    raise InvalidParam(f"{path}: unknown model kind '{kind}'")
