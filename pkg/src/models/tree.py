from __future__ import annotations

import typing as tp
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import xlogy

from src.utils.exceptions import NoValidSplit

TIE_TOLERANCE = 1e-12
MIN_RELATIVE_GAIN = 1e-10


class SplitMode(str, Enum):
    squared = 'squared'
    poisson = 'poisson'


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


@dataclass
class SplitNode:
    """
    Tree node; rows with x[feature] <= threshold go left.
    `value` is the mean response (squared mode) or the claim rate per unit of exposure (poisson mode).
    """
    n: int
    sum_y: float
    sum_exposure: float
    value: float
    feature: tp.Optional[int] = None
    threshold: tp.Optional[float] = None
    gain: float = 0.0
    left: tp.Optional[SplitNode] = None
    right: tp.Optional[SplitNode] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def nodes(self) -> tp.Iterator[SplitNode]:
        """Breadth-first traversal."""
        queue = deque([self])
        while queue:
            node = queue.popleft()
            yield node
            if not node.is_leaf:
                queue.extend([node.left, node.right])

    def leaves(self) -> tp.List[SplitNode]:
        return [node for node in self.nodes() if node.is_leaf]

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0])
        stack = [(self, np.arange(x.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if node.is_leaf:
                out[rows] = node.value
                continue
            goes_left = x[rows, node.feature] <= node.threshold
            stack.append((node.left, rows[goes_left]))
            stack.append((node.right, rows[~goes_left]))
        return out


def node_statistics(y: np.ndarray, exposure: np.ndarray, mode: SplitMode) -> SplitNode:
    sum_y, sum_exposure = float(y.sum()), float(exposure.sum())
    value = sum_y / sum_exposure if mode is SplitMode.poisson else sum_y / y.size
    return SplitNode(n=int(y.size), sum_y=sum_y, sum_exposure=sum_exposure, value=value)


def _poisson_term(total_y, total_exposure):
    """Y log(Y / E): the part of a node's Poisson deviance that changes when it is split."""
    return xlogy(total_y, total_y) - xlogy(total_y, total_exposure)


def _feature_gains(values: np.ndarray, y: np.ndarray, exposure: np.ndarray, mode: SplitMode, min_leaf: int):
    """Gain of every admissible threshold of one feature, thresholds ascending."""
    order = np.argsort(values, kind='stable')
    xs, ys, es = values[order], y[order], exposure[order]
    n = xs.size
    # candidate cut after position i leaves i + 1 rows on the left
    cuts = np.flatnonzero(xs[:-1] < xs[1:])
    left_n = cuts + 1
    admissible = (left_n >= min_leaf) & (n - left_n >= min_leaf)
    cuts, left_n = cuts[admissible], left_n[admissible]
    if cuts.size == 0:
        return np.empty(0), np.empty(0)
    thresholds = (xs[cuts] + xs[cuts + 1]) / 2

    if mode is SplitMode.squared:
        centered = ys - ys.mean()
        s1, s2 = np.cumsum(centered), np.cumsum(centered ** 2)
        total1, total2 = s1[-1], s2[-1]
        left = s2[cuts] - s1[cuts] ** 2 / left_n
        right_n = n - left_n
        right = (total2 - s2[cuts]) - (total1 - s1[cuts]) ** 2 / right_n
        parent = total2 - total1 ** 2 / n
        gains = parent - left - right
    else:
        cy, ce = np.cumsum(ys), np.cumsum(es)
        total_y, total_e = cy[-1], ce[-1]
        gains = 2 * (_poisson_term(cy[cuts], ce[cuts]) + _poisson_term(total_y - cy[cuts], total_e - ce[cuts])
                     - _poisson_term(total_y, total_e))
    return thresholds, gains


def best_split(x: np.ndarray, y: np.ndarray, exposure: np.ndarray, features: tp.Sequence[int],
               mode: tp.Union[SplitMode, str], min_leaf: int) -> Split:
    """
    Exhaustive search over midpoints of consecutive distinct values of the candidate features.
    Gains equal to the best within a relative 1e-12 resolve to the lowest feature, then the lowest threshold.
    """
    mode = SplitMode(mode)
    if y.size < 2 * min_leaf:
        raise NoValidSplit(f"Node of {y.size} rows cannot hold two leaves of {min_leaf}")

    candidates = []
    for feature in sorted(features):
        thresholds, gains = _feature_gains(x[:, feature], y, exposure, mode, min_leaf)
        if gains.size:
            candidates.append((feature, thresholds, gains))
    if not candidates:
        raise NoValidSplit("No threshold leaves min_leaf rows on both sides")

    top = max(gains.max() for _, _, gains in candidates)
    scale = float(np.sum(y ** 2)) if mode is SplitMode.squared else float(np.sum(y))
    if not top > MIN_RELATIVE_GAIN * max(1.0, scale):
        raise NoValidSplit("No split decreases the loss")
    floor = top - TIE_TOLERANCE * max(1.0, abs(top))
    for feature, thresholds, gains in candidates:
        hits = np.flatnonzero(gains >= floor)
        if hits.size:
            return Split(feature=int(feature), threshold=float(thresholds[hits[0]]), gain=float(gains[hits[0]]))
    raise NoValidSplit("No split decreases the loss")


def grow_tree(x: np.ndarray, y: np.ndarray, exposure: np.ndarray, mode: tp.Union[SplitMode, str],
              max_nodes: int, min_leaf: int, mtry: int = None, rng: np.random.Generator = None) -> SplitNode:
    """
    Grow a tree breadth-first until `max_nodes` leaves exist or no leaf can be split.
    :param mtry: features drawn without replacement at each node, all features when omitted
    """
    mode = SplitMode(mode)
    if y.size == 0:
        raise NoValidSplit("Cannot grow a tree on an empty sample")
    n_features = x.shape[1]
    mtry = n_features if mtry is None else mtry
    rng = rng or np.random.default_rng(0)

    root = node_statistics(y, exposure, mode)
    queue = deque([(root, np.arange(y.size))])
    leaves = 1
    while queue and leaves < max_nodes:
        node, rows = queue.popleft()
        if mtry < n_features:
            features = np.sort(rng.choice(n_features, size=mtry, replace=False))
        else:
            features = np.arange(n_features)
        try:
            split = best_split(x[rows], y[rows], exposure[rows], features, mode, min_leaf)
        except NoValidSplit:
            continue
        goes_left = x[rows, split.feature] <= split.threshold
        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        node.feature, node.threshold, node.gain = split.feature, split.threshold, split.gain
        node.left = node_statistics(y[left_rows], exposure[left_rows], mode)
        node.right = node_statistics(y[right_rows], exposure[right_rows], mode)
        leaves += 1
        queue.extend([(node.left, left_rows), (node.right, right_rows)])
    return root
