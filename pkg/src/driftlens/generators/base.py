"""Stationary base streams. The class label is emitted as the last column."""
from __future__ import annotations

import numpy as np

from ..core import Dataset
from ..errors import UnknownKind

AGRAWAL_FEATURES = ("salary", "commission", "age", "elevel", "car", "zipcode",
                    "hvalue", "hyears", "loan")


def agrawal_label(X: np.ndarray, function: int = 1) -> np.ndarray:
    """Agrawal classification functions 1-3; group A maps to label 0."""
    salary, age, elevel = X[:, 0], X[:, 2], X[:, 3]
    young = age < 40
    middle = (age >= 40) & (age < 60)
    old = age >= 60
    if function == 1:
        group_a = young | old
    elif function == 2:
        group_a = ((young & (salary >= 50000) & (salary <= 100000))
                   | (middle & (salary >= 75000) & (salary <= 125000))
                   | (old & (salary >= 25000) & (salary <= 75000)))
    elif function == 3:
        group_a = ((young & np.isin(elevel, (0, 1)))
                   | (middle & np.isin(elevel, (1, 2, 3)))
                   | (old & np.isin(elevel, (2, 3, 4))))
    else:
        raise UnknownKind(f"Agrawal function {function} not implemented (1-3 available)")
    return np.where(group_a, 0.0, 1.0)


def agrawal(n: int, rng: np.random.Generator, function: int = 1) -> tuple:
    salary = rng.uniform(20000, 150000, n)
    commission = np.where(salary >= 75000, 0.0, rng.uniform(10000, 75000, n))
    age = rng.integers(20, 81, n).astype(float)
    elevel = rng.integers(0, 5, n).astype(float)
    car = rng.integers(1, 21, n).astype(float)
    zipcode = rng.integers(0, 9, n).astype(float)
    hvalue = (9 - zipcode) * 100000 * rng.uniform(0.5, 1.5, n)
    hyears = rng.integers(1, 31, n).astype(float)
    loan = rng.uniform(0, 500000, n)
    X = np.column_stack([salary, commission, age, elevel, car, zipcode, hvalue, hyears, loan])
    return X, agrawal_label(X, function), list(AGRAWAL_FEATURES)


def mixed_label(X: np.ndarray) -> np.ndarray:
    v, w, x, y = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    z = y < 0.5 + 0.3 * np.sin(3 * np.pi * x)
    return ((v.astype(int) + w.astype(int) + z.astype(int)) >= 2).astype(float)


def mixed(n: int, rng: np.random.Generator) -> tuple:
    v = rng.integers(0, 2, n).astype(float)
    w = rng.integers(0, 2, n).astype(float)
    x = rng.uniform(0, 1, n)
    y = rng.uniform(0, 1, n)
    X = np.column_stack([v, w, x, y])
    return X, mixed_label(X), ["v", "w", "x", "y"]


def random_rbf(n: int, rng: np.random.Generator, n_centroids: int = 50, n_features: int = 10,
               n_classes: int = 2, spread=None) -> tuple:
    """Weighted Gaussian-like clusters around random centroids.

    ``spread`` fixes every centroid's standard deviation (0 gives a point
    mass); by default each centroid draws its own from U[0, 1).
    """
    centers = rng.uniform(0, 1, (n_centroids, n_features))
    classes = rng.integers(0, n_classes, n_centroids).astype(float)
    stds = rng.uniform(0, 1, n_centroids) if spread is None else np.full(n_centroids, float(spread))
    weights = rng.uniform(0, 1, n_centroids)
    weights = weights / weights.sum() if weights.sum() > 0 else np.full(n_centroids, 1 / n_centroids)
    pick = rng.choice(n_centroids, size=n, p=weights)
    direction = rng.standard_normal((n, n_features))
    norm = np.linalg.norm(direction, axis=1, keepdims=True)
    direction = direction / np.where(norm > 0, norm, 1.0)
    magnitude = rng.standard_normal(n) * stds[pick]
    X = centers[pick] + direction * magnitude[:, None]
    return X, classes[pick], [f"att{j}" for j in range(n_features)]


def _random_tree(rng, n_features, depth, max_depth, min_leaf_depth, leaf_fraction,
                 lo, hi, n_classes):
    if depth >= max_depth or (depth >= min_leaf_depth and rng.random() < leaf_fraction):
        return ("leaf", int(rng.integers(n_classes)))
    f = int(rng.integers(n_features))
    thr = float(rng.uniform(lo[f], hi[f]))
    hl, lh = hi.copy(), lo.copy()
    hl[f] = thr
    lh[f] = thr
    return ("split", f, thr,
            _random_tree(rng, n_features, depth + 1, max_depth, min_leaf_depth, leaf_fraction,
                         lo, hl, n_classes),
            _random_tree(rng, n_features, depth + 1, max_depth, min_leaf_depth, leaf_fraction,
                         lh, hi, n_classes))


def _eval_tree(node, x):
    while node[0] == "split":
        node = node[3] if x[node[1]] < node[2] else node[4]
    return node[1]


def random_tree(n: int, rng: np.random.Generator, n_features: int = 10, max_depth: int = 5,
                min_leaf_depth: int = 3, leaf_fraction: float = 0.15, n_classes: int = 2) -> tuple:
    """Uniform features labelled by a randomly grown decision tree."""
    tree = _random_tree(rng, n_features, 0, max_depth, min_leaf_depth, leaf_fraction,
                        np.zeros(n_features), np.ones(n_features), n_classes)
    X = rng.uniform(0, 1, (n, n_features))
    y = np.array([_eval_tree(tree, x) for x in X], dtype=float)
    return X, y, [f"x{j}" for j in range(n_features)]


def gaussian_blobs(n: int, rng: np.random.Generator, n_features: int = 2, n_centers: int = 2,
                   scale: float = 0.5, separation: float = 5.0) -> tuple:
    centers = rng.standard_normal((n_centers, n_features)) * separation
    lab = rng.integers(0, n_centers, n)
    X = centers[lab] + rng.standard_normal((n, n_features)) * scale
    return X, lab.astype(float), [f"x{j}" for j in range(n_features)]


GENERATORS = {
    "agrawal": agrawal,
    "mixed": mixed,
    "random_rbf": random_rbf,
    "random_tree": random_tree,
    "gaussian_blobs": gaussian_blobs,
}


def gen_base(kind: str, n: int, seed: int = 0, include_label: bool = True, **params) -> Dataset:
    """Stationary stream of ``n`` samples on a uniform time grid over [0, 1]."""
    if kind not in GENERATORS:
        raise UnknownKind(f"unknown base generator {kind!r}; choose from {sorted(GENERATORS)}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA5E]))
    X, y, names = GENERATORS[kind](n, rng, **params)
    if include_label:
        X = np.column_stack([X, y])
        names = list(names) + ["label"]
    t = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    return Dataset(X, t, tuple(names), meta={"generator": kind, "seed": seed, **params})
