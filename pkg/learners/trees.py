"""
CART trees and the two ensembles built on them.

Split search is exhaustive over midpoints of consecutive distinct values.
Scores are compared with an absolute tolerance; within it the lower feature
index and then the lower threshold win. Row sums are taken with masks over
the full node, so a split and its mirror image (a binary column inverted)
score identically and retrained trees come out the same.
"""
import logging
import math
import zlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit, logit

from .base import CamModel, LearnerError, check_fitted

logger = logging.getLogger(__name__)

SCORE_TOL = 1e-9


def gini(count0: float, count1: float) -> float:
    """Two-class Gini impurity from class counts."""
    total = count0 + count1
    if total <= 0:
        raise LearnerError("gini of an empty node")
    p0, p1 = count0 / total, count1 / total
    return 1.0 - p0 * p0 - p1 * p1


def _thresholds(column: np.ndarray) -> np.ndarray:
    values = np.unique(column)
    return (values[:-1] + values[1:]) / 2.0


def _scan(X, features, score_fn) -> Optional[Tuple[int, float, float]]:
    """Best (feature, threshold, score) by score, lowest feature/threshold on ties."""
    best = None
    for f in features:
        thresholds = _thresholds(X[:, f])
        if len(thresholds) == 0:
            continue
        masks = X[:, f][np.newaxis, :] <= thresholds[:, np.newaxis]
        scores = score_fn(masks)
        for thr, score in zip(thresholds, scores):
            if np.isnan(score):
                continue
            if best is None or score > best[2] + SCORE_TOL:
                best = (int(f), float(thr), float(score))
    return best


def best_split(X: np.ndarray, y: np.ndarray,
               features: Optional[Sequence[int]] = None) -> Optional[Tuple[int, float, float]]:
    """
    Exhaustive Gini split search. Returns ``(feature, threshold, decrease)``
    or None when the node is pure or no feature has two distinct values.
    A zero decrease is still returned so XOR-style targets can be split.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n == 0:
        raise LearnerError("best_split on no rows")
    pos = float(y.sum())
    if pos == 0 or pos == n:
        return None
    parent = gini(n - pos, pos)
    if features is None:
        features = range(X.shape[1])

    def decrease(masks):
        n_left = masks.sum(axis=1).astype(float)
        pos_left = masks @ y
        n_right = n - n_left
        pos_right = pos - pos_left
        g_left = 1.0 - (pos_left / n_left) ** 2 - ((n_left - pos_left) / n_left) ** 2
        g_right = 1.0 - (pos_right / n_right) ** 2 - ((n_right - pos_right) / n_right) ** 2
        return parent - (n_left * g_left + n_right * g_right) / n

    return _scan(X, sorted(features), decrease)


@dataclass
class TreeNode:
    samples: int
    value: float
    impurity: float = 0.0
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional['TreeNode'] = None
    right: Optional['TreeNode'] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def label(self) -> int:
        return int(self.value > 0.5)

    @property
    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth, self.right.depth)

    def count(self) -> int:
        if self.is_leaf:
            return 1
        return 1 + self.left.count() + self.right.count()

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        self._fill(X, np.arange(len(X)), out)
        return out

    def _fill(self, X, rows, out):
        if self.is_leaf:
            out[rows] = self.value
            return
        goes_left = X[rows, self.feature] <= self.threshold
        self.left._fill(X, rows[goes_left], out)
        self.right._fill(X, rows[~goes_left], out)

    def to_dict(self) -> dict:
        node = {'samples': self.samples, 'value': self.value, 'impurity': self.impurity}
        if not self.is_leaf:
            node.update(feature=self.feature, threshold=self.threshold,
                        left=self.left.to_dict(), right=self.right.to_dict())
        return node

    @classmethod
    def from_dict(cls, data: dict) -> 'TreeNode':
        node = cls(samples=data['samples'], value=data['value'], impurity=data['impurity'])
        if 'feature' in data:
            node.feature = data['feature']
            node.threshold = data['threshold']
            node.left = cls.from_dict(data['left'])
            node.right = cls.from_dict(data['right'])
        return node


def grow_tree(X, y, max_depth=None, min_samples_split=2, choose_features=None) -> TreeNode:
    """Recursive CART; ``choose_features(rows)`` restricts candidates per node."""

    def grow(rows, depth):
        yy = y[rows]
        pos = float(np.sum(yy))
        node = TreeNode(samples=len(rows), value=pos / len(rows),
                        impurity=gini(len(rows) - pos, pos))
        if node.impurity == 0.0 or len(rows) < min_samples_split:
            return node
        if max_depth is not None and depth >= max_depth:
            return node
        split = None
        if choose_features is not None:
            candidates = choose_features(rows)
            split = best_split(X[rows], yy, candidates)
            if split is None:
                rest = sorted(set(range(X.shape[1])) - set(candidates))
                split = best_split(X[rows], yy, rest)
        else:
            split = best_split(X[rows], yy)
        if split is None:
            return node
        node.feature, node.threshold, _ = split
        goes_left = X[rows, node.feature] <= node.threshold
        node.left = grow(rows[goes_left], depth + 1)
        node.right = grow(rows[~goes_left], depth + 1)
        return node

    return grow(np.arange(len(y)), 0)


class DecisionTreeCam(CamModel):
    """Single CART tree grown to purity unless ``max_depth`` stops it."""
    algo = 'dt'
    strict_majority = True

    def __init__(self, max_depth=None, min_samples_split=2, random_state=0):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.random_state = random_state

    def _fit(self, X, y):
        self.tree_ = grow_tree(X, y, self.max_depth, self.min_samples_split)

    def _score(self, X):
        return self.tree_.apply(X)

    def _state(self):
        return {'tree': self.tree_.to_dict()}

    def _load_state(self, state):
        self.tree_ = TreeNode.from_dict(state['tree'])

    def export_tree(self) -> TreeNode:
        """Root of the fitted tree; a one-class fit exports as a single leaf."""
        check_fitted(self)
        if self.constant_ is not None:
            return TreeNode(samples=0, value=self.constant_)
        return self.tree_


def _forest_tree(X, y, seed, tree_index, max_depth):
    rng = np.random.default_rng([seed, tree_index])
    n, d = X.shape
    boot = np.sort(rng.integers(0, n, size=n))
    Xb, yb = X[boot], y[boot]
    k = math.ceil(math.sqrt(d))

    def choose_features(rows):
        # keyed by the node's row multiset, not by the order nodes are grown
        key = zlib.crc32(np.sort(boot[rows]).astype(np.int64).tobytes())
        node_rng = np.random.default_rng([seed, tree_index, key])
        return sorted(int(f) for f in node_rng.choice(d, size=k, replace=False))

    return grow_tree(Xb, yb, max_depth, 2, choose_features)


class RandomForestCam(CamModel):
    """
    Bagged CART trees with sqrt(d) candidate features per node, averaged by
    vote. Each tree depends only on ``random_state`` and its index, so
    ``n_jobs`` never changes the result.
    """
    algo = 'rf'
    strict_majority = True

    def __init__(self, n_estimators=1000, max_depth=None, n_jobs=1, random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _fit(self, X, y):
        if self.n_estimators < 1:
            raise LearnerError("random forest needs at least one tree")
        self.trees_ = Parallel(n_jobs=self.n_jobs, prefer='threads')(
            delayed(_forest_tree)(X, y, self.random_state, t, self.max_depth)
            for t in range(self.n_estimators)
        )

    def _score(self, X):
        votes = np.zeros(len(X))
        for tree in self.trees_:
            votes += tree.apply(X) > 0.5
        return votes / len(self.trees_)

    def _state(self):
        return {'trees': [tree.to_dict() for tree in self.trees_]}

    def _load_state(self, state):
        self.trees_ = [TreeNode.from_dict(tree) for tree in state['trees']]


def logistic_loss(y: np.ndarray, raw: np.ndarray) -> float:
    """Summed log loss of raw margins."""
    return float(np.sum(np.logaddexp(0.0, raw) - y * raw))


def logistic_grad_hess(y: np.ndarray, raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row first and second derivatives of the log loss."""
    p = expit(raw)
    return p - y, p * (1.0 - p)


def grow_boosted_tree(X, g, h, max_depth, reg_lambda, min_child_weight) -> TreeNode:
    """Second-order regression tree; leaves hold ``-G / (H + lambda)``."""

    def grow(rows, depth):
        gg, hh = g[rows], h[rows]
        G, H = float(np.sum(gg)), float(np.sum(hh))
        node = TreeNode(samples=len(rows), value=-G / (H + reg_lambda))
        if depth >= max_depth or len(rows) < 2:
            return node
        parent = G * G / (H + reg_lambda)

        def gain(masks):
            GL, HL = masks @ gg, masks @ hh
            GR, HR = ~masks @ gg, ~masks @ hh
            score = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda) - parent)
            valid = (HL >= min_child_weight) & (HR >= min_child_weight)
            return np.where(valid, score, np.nan)

        split = _scan(X[rows], range(X.shape[1]), gain)
        if split is None or split[2] < -SCORE_TOL:
            return node
        node.feature, node.threshold, node.impurity = split
        goes_left = X[rows, node.feature] <= node.threshold
        node.left = grow(rows[goes_left], depth + 1)
        node.right = grow(rows[~goes_left], depth + 1)
        return node

    return grow(np.arange(len(g)), 0)


class GradientBoostedCam(CamModel):
    """
    Newton-boosted regression trees on the logistic loss, starting from the
    log-odds of the training base rate.
    """
    algo = 'gbt'

    def __init__(self, n_estimators=100, learning_rate=0.3, max_depth=6, reg_lambda=1.0,
                 min_child_weight=1.0, random_state=0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.random_state = random_state

    def _fit(self, X, y):
        y = y.astype(float)
        self.base_score_ = float(logit(np.clip(y.mean(), 1e-6, 1 - 1e-6)))
        raw = np.full(len(y), self.base_score_)
        self.trees_: List[TreeNode] = []
        for _ in range(self.n_estimators):
            g, h = logistic_grad_hess(y, raw)
            tree = grow_boosted_tree(X, g, h, self.max_depth, self.reg_lambda,
                                     self.min_child_weight)
            self.trees_.append(tree)
            raw = raw + self.learning_rate * tree.apply(X)
        logger.debug("gbt: %d rounds, final loss %.6f", len(self.trees_), logistic_loss(y, raw))

    def raw_margin(self, X) -> np.ndarray:
        """Log-odds before the sigmoid."""
        raw = np.full(len(X), self.base_score_)
        for tree in self.trees_:
            raw = raw + self.learning_rate * tree.apply(X)
        return raw

    def _score(self, X):
        return expit(self.raw_margin(X))

    def _state(self):
        return {'base_score': self.base_score_, 'trees': [t.to_dict() for t in self.trees_]}

    def _load_state(self, state):
        self.base_score_ = state['base_score']
        self.trees_ = [TreeNode.from_dict(t) for t in state['trees']]
