"""CART trees and forests that predict time from data.

Moment trees regress embedded time targets; their leaves are drift segments.
Probability trees classify before/after and report Laplace-smoothed leaf
frequencies.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import NamedTuple, Optional, Union

import numpy as np

from ..core import TimeEmbedding, time_histogram
from ..errors import DimensionMismatch, SingleClass, TooFewSamples, WrongModelKind
from ._kernels import apply_tree, build_tree

HIST_BINS = 10


@dataclass(frozen=True)
class FitConfig:
    max_depth: int = 8
    min_leaf: int = 5
    n_trees: int = 100
    # None -> sqrt(p)/p for forests, 1.0 for single trees
    feature_subsample: Optional[float] = None
    seed: int = 0
    l1_strength: float = 0.01
    bootstrap: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.feature_subsample is not None and not 0 < self.feature_subsample <= 1:
            raise ValueError("feature_subsample must lie in (0, 1]")
        if self.l1_strength < 0:
            raise ValueError("l1_strength must be >= 0")

    def replace(self, **kw) -> "FitConfig":
        d = asdict(self)
        d.update(kw)
        return FitConfig(**d)

    def to_dict(self) -> dict:
        # n_jobs never changes results, so it is not part of the echoed config
        d = asdict(self)
        d.pop("n_jobs")
        return d

    def max_features(self, n_features: int, forest: bool) -> int:
        rate = self.feature_subsample
        if rate is None:
            rate = math.sqrt(n_features) / n_features if forest else 1.0
        return max(1, min(n_features, int(round(rate * n_features))))


class Split(NamedTuple):
    feature_index: int
    threshold: float
    left: "Union[Split, Leaf]"
    right: "Union[Split, Leaf]"


class Leaf(NamedTuple):
    id: int
    target_mean: np.ndarray
    class_counts: Optional[np.ndarray]
    n: int


@dataclass
class Tree:
    """Flat array form of a fitted binary tree (node 0 is the root)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_id: np.ndarray
    value: np.ndarray
    n_node: np.ndarray
    impurity: np.ndarray
    gain: np.ndarray
    n_features: int
    # per-node time histogram, filled for leaves only
    time_hist: Optional[np.ndarray] = None

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def apply(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def leaves(self, X) -> np.ndarray:
        return self.leaf_id[self.apply(X)]

    def leaf_nodes(self) -> np.ndarray:
        """Node index of every leaf, ordered by leaf id."""
        nodes = np.flatnonzero(self.feature < 0)
        return nodes[np.argsort(self.leaf_id[nodes])]

    def root(self):
        """Nested :class:`Split`/:class:`Leaf` view of the tree."""
        def build(i):
            if self.feature[i] < 0:
                counts = None
                if self.value.shape[1] == 1 and np.all((self.value[:, 0] >= 0) & (self.value[:, 0] <= 1)):
                    n1 = int(round(self.value[i, 0] * self.n_node[i]))
                    counts = np.array([int(self.n_node[i]) - n1, n1])
                return Leaf(int(self.leaf_id[i]), self.value[i].copy(), counts, int(self.n_node[i]))
            return Split(int(self.feature[i]), float(self.threshold[i]),
                         build(self.left[i]), build(self.right[i]))
        return build(0)

    def feature_importance(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        split = self.feature >= 0
        np.add.at(imp, self.feature[split], self.gain[split])
        total = imp.sum()
        return imp / total if total > 0 else imp

    def to_dict(self) -> dict:
        out = {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf_id": self.leaf_id.tolist(),
            "value": self.value.tolist(),
            "n": self.n_node.tolist(),
            "impurity": self.impurity.tolist(),
            "gain": self.gain.tolist(),
            "n_features": self.n_features,
        }
        if self.time_hist is not None:
            out["time_hist"] = self.time_hist.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        value = np.asarray(d["value"], dtype=np.float64)
        if value.ndim == 1:
            value = value[:, None]
        th = d.get("time_hist")
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            leaf_id=np.asarray(d["leaf_id"], dtype=np.int64),
            value=value,
            n_node=np.asarray(d["n"], dtype=np.float64),
            impurity=np.asarray(d["impurity"], dtype=np.float64),
            gain=np.asarray(d["gain"], dtype=np.float64),
            n_features=int(d["n_features"]),
            time_hist=None if th is None else np.asarray(th, dtype=np.float64),
        )


def _check_X(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DimensionMismatch(f"expected {n_features} features, got shape {X.shape}")
    return np.ascontiguousarray(X)


def grow_tree(X, Y, idx=None, max_depth=8, min_leaf=5, max_features=None,
              rng: Optional[np.random.Generator] = None, t=None) -> Tree:
    """Grow one variance-reduction tree; ``t`` adds per-leaf time histograms."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = X.shape
    if idx is None:
        idx = np.arange(n, dtype=np.int64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if max_features is None:
        max_features = p
    if max_features < p:
        if rng is None:
            raise ValueError("feature subsampling needs an rng")
        rand = rng.random(max(16, 2 * len(idx) * p))
    else:
        rand = np.zeros(1)
    arrays = build_tree(X, Y, idx, int(max_depth), int(min_leaf), int(max_features), rand)
    tree = Tree(*arrays, n_features=p)
    if t is not None:
        nodes = tree.apply(X[idx])
        hist = np.zeros((len(tree.feature), HIST_BINS))
        bins = np.minimum((np.asarray(t)[idx] * HIST_BINS).astype(np.int64), HIST_BINS - 1)
        np.add.at(hist, (nodes, bins), 1.0)
        tree.time_hist = hist
    return tree


def _tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]))


def _grow_forest(X, Y, cfg: FitConfig, t=None) -> list:
    n, p = X.shape
    max_features = cfg.max_features(p, forest=True)

    def one(i):
        rng = _tree_rng(cfg.seed, i)
        idx = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        idx = np.sort(idx)
        return grow_tree(X, Y, idx, cfg.max_depth, cfg.min_leaf, max_features, rng, t=t)

    if cfg.n_jobs and cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            return list(pool.map(one, range(cfg.n_trees)))
    return [one(i) for i in range(cfg.n_trees)]


class TimeModel:
    """Common surface of every fitted time model."""

    kind = "base"
    is_classifier = False
    is_forest = False
    n_features: int

    def predict_proba(self, X) -> np.ndarray:
        raise WrongModelKind(f"{self.kind} is not a classifier")

    def predict_moments(self, X):
        raise WrongModelKind(f"{self.kind} does not predict time moments")

    def predict(self, X) -> np.ndarray:
        """Point prediction in target space: p(after) or moment vector."""
        if self.is_classifier:
            return self.predict_proba(X)[:, 1]
        return self.predict_moments(X)[1]


def _laplace(value, n):
    n1 = value[:, 0] * n
    p1 = (n1 + 1.0) / (n + 2.0)
    return np.column_stack([1.0 - p1, p1])


@dataclass
class MomentTree(TimeModel):
    tree: Tree
    embedding: TimeEmbedding
    config: FitConfig = field(default_factory=FitConfig)
    kind = "moment_tree"

    @property
    def n_features(self) -> int:
        return self.tree.n_features

    def predict_moments(self, X):
        nodes = self.tree.apply(X)
        return self.tree.leaf_id[nodes], self.tree.value[nodes]

    def time_distribution(self, X) -> np.ndarray:
        nodes = self.tree.apply(X)
        h = self.tree.time_hist[nodes]
        return h / h.sum(axis=1, keepdims=True)


@dataclass
class MomentForest(TimeModel):
    trees: list
    embedding: TimeEmbedding
    config: FitConfig = field(default_factory=FitConfig)
    kind = "moment_forest"
    is_forest = True

    def __post_init__(self):
        self.segment_registry = {}

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def leaf_matrix(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return np.column_stack([tr.leaves(X) for tr in self.trees])

    def predict_moments(self, X):
        X = _check_X(X, self.n_features)
        acc = None
        leaves = np.empty((X.shape[0], len(self.trees)), dtype=np.int64)
        for j, tr in enumerate(self.trees):
            nodes = tr.apply(X)
            leaves[:, j] = tr.leaf_id[nodes]
            v = tr.value[nodes]
            acc = v.copy() if acc is None else acc + v
        ids = np.array([self._segment_id(row) for row in leaves], dtype=np.int64)
        return ids, acc / len(self.trees)

    def _segment_id(self, leaf_tuple) -> int:
        key = tuple(int(v) for v in leaf_tuple)
        digest = hashlib.blake2b(np.asarray(key, dtype="<i8").tobytes(), digest_size=7).digest()
        sid = int.from_bytes(digest, "little")
        self.segment_registry.setdefault(sid, key)
        return sid

    def time_distribution(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        acc = 0.0
        for tr in self.trees:
            h = tr.time_hist[tr.apply(X)]
            acc = acc + h / h.sum(axis=1, keepdims=True)
        return acc / len(self.trees)


@dataclass
class ProbTree(TimeModel):
    tree: Tree
    config: FitConfig = field(default_factory=FitConfig)
    kind = "prob_tree"
    is_classifier = True

    @property
    def n_features(self) -> int:
        return self.tree.n_features

    def predict_proba(self, X) -> np.ndarray:
        nodes = self.tree.apply(X)
        return _laplace(self.tree.value[nodes], self.tree.n_node[nodes])

    def time_distribution(self, X) -> np.ndarray:
        return self.predict_proba(X)


@dataclass
class ProbForest(TimeModel):
    trees: list
    config: FitConfig = field(default_factory=FitConfig)
    kind = "prob_forest"
    is_classifier = True
    is_forest = True

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def leaf_matrix(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return np.column_stack([tr.leaves(X) for tr in self.trees])

    def tree_probas(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.empty((len(self.trees), X.shape[0]))
        for j, tr in enumerate(self.trees):
            nodes = tr.apply(X)
            out[j] = _laplace(tr.value[nodes], tr.n_node[nodes])[:, 1]
        return out

    def predict_proba(self, X) -> np.ndarray:
        p1 = self.tree_probas(X).mean(axis=0)
        return np.column_stack([1.0 - p1, p1])

    def time_distribution(self, X) -> np.ndarray:
        return self.predict_proba(X)


def _check_fit(X, cfg: FitConfig):
    n = X.shape[0]
    if n < 2 * cfg.min_leaf:
        raise TooFewSamples(f"{n} samples, need at least 2 * min_leaf = {2 * cfg.min_leaf}")


def _as_xt(ds_or_X, t=None):
    if t is None:
        return np.ascontiguousarray(ds_or_X.X), np.asarray(ds_or_X.t)
    return np.ascontiguousarray(ds_or_X, dtype=np.float64), np.asarray(t, dtype=np.float64)


def fit_moment_tree(ds, emb: TimeEmbedding, cfg: FitConfig = FitConfig(), t=None) -> MomentTree:
    """Fit a single moment tree. Pass ``(X, t)`` arrays or a Dataset."""
    X, t = _as_xt(ds, t)
    _check_fit(X, cfg)
    Y = emb(t)
    mf = cfg.max_features(X.shape[1], forest=False)
    rng = _tree_rng(cfg.seed, 0) if mf < X.shape[1] else None
    tree = grow_tree(X, Y, None, cfg.max_depth, cfg.min_leaf, mf, rng, t=t)
    return MomentTree(tree, emb, cfg)


def fit_moment_forest(ds, emb: TimeEmbedding, cfg: FitConfig = FitConfig(), t=None) -> MomentForest:
    X, t = _as_xt(ds, t)
    _check_fit(X, cfg)
    return MomentForest(_grow_forest(X, emb(t), cfg, t=t), emb, cfg)


def _check_labels(X, labels, cfg):
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],):
        raise DimensionMismatch("labels length differs from sample count")
    y = labels.astype(np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise SingleClass("both classes must be present")
    _check_fit(X, cfg)
    return y


def fit_prob_classifier(ds, labels, cfg: FitConfig = FitConfig(), kind: str = "forest"):
    """Fit a before/after classifier: ``kind`` is tree, forest or linear."""
    X = np.ascontiguousarray(ds.X if hasattr(ds, "X") else ds, dtype=np.float64)
    y = _check_labels(X, labels, cfg)
    if kind == "tree":
        mf = cfg.max_features(X.shape[1], forest=False)
        rng = _tree_rng(cfg.seed, 0) if mf < X.shape[1] else None
        return ProbTree(grow_tree(X, y, None, cfg.max_depth, cfg.min_leaf, mf, rng), cfg)
    if kind == "forest":
        return ProbForest(_grow_forest(X, y[:, None], cfg), cfg)
    if kind == "linear":
        from .linear import fit_logistic_l1
        return fit_logistic_l1(X, y, cfg)
    raise WrongModelKind(f"unknown classifier kind {kind!r}")


def fit_time_model(ds, emb: TimeEmbedding, cfg: FitConfig = FitConfig(), kind: str = "forest", t=None):
    """Fit a model of the named kind on embedded time targets.

    With a binary embedding this returns a classifier, otherwise a moment
    regressor (tree, forest or lasso).
    """
    X, t = _as_xt(ds, t)
    if emb.kind == "binary":
        return fit_prob_classifier(X, emb(t)[:, 0], cfg, kind)
    if kind == "tree":
        return fit_moment_tree(X, emb, cfg, t=t)
    if kind == "forest":
        return fit_moment_forest(X, emb, cfg, t=t)
    if kind == "linear":
        from .linear import fit_lasso_moments
        return fit_lasso_moments(X, emb(t), emb, cfg)
    raise WrongModelKind(f"unknown model kind {kind!r}")


def predict_proba(m: TimeModel, x) -> np.ndarray:
    """[p(before), p(after)] for one sample, or an (n, 2) array for many."""
    if not m.is_classifier:
        raise WrongModelKind(f"{m.kind} is not a classifier")
    single = np.ndim(x) == 1
    p = m.predict_proba(x)
    return p[0] if single else p


def predict_moments(m: TimeModel, x):
    if m.is_classifier or not hasattr(m, "embedding") or m.kind == "linear_l1":
        raise WrongModelKind(f"{m.kind} has no segment structure")
    single = np.ndim(x) == 1
    ids, mom = m.predict_moments(x)
    return (int(ids[0]), mom[0]) if single else (ids, mom)


def rf_kernel(m: TimeModel, x, y) -> float:
    """Fraction of member trees placing ``x`` and ``y`` in the same leaf."""
    if not m.is_forest:
        raise WrongModelKind(f"{m.kind} is not a forest")
    L = m.leaf_matrix(np.vstack([np.atleast_2d(x), np.atleast_2d(y)]))
    return float(np.mean(L[0] == L[1]))


def rf_kernel_matrix(m: TimeModel, X) -> np.ndarray:
    if not m.is_forest:
        raise WrongModelKind(f"{m.kind} is not a forest")
    L = m.leaf_matrix(X)
    n = L.shape[0]
    K = np.zeros((n, n))
    for j in range(L.shape[1]):
        col = L[:, j]
        K += col[:, None] == col[None, :]
    return K / L.shape[1]


def model_feature_importance(m: TimeModel) -> np.ndarray:
    """Impurity-decrease importance normalized to sum 1 (zeros if no splits)."""
    if hasattr(m, "tree"):
        return m.tree.feature_importance()
    if hasattr(m, "trees"):
        imp = np.mean([tr.feature_importance() for tr in m.trees], axis=0)
        s = imp.sum()
        return imp / s if s > 0 else imp
    raise WrongModelKind(f"{m.kind} has no impurity importance; use linear_weights")
