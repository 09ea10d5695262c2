"""Characteristic samples per drift region or segment.

Distances are plain Euclidean, a drift-aware geodesic over a k-NN graph, or
one minus the forest kernel. Prototypes are k-means centroids under the
Euclidean metric and k-medoids otherwise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import cdist

from .core import time_histogram
from .errors import DisconnectedGraph, EmptyGroup, KTooLarge, UnknownKind, WrongModelKind
from .localization import AFTER, BEFORE, LocusReport
from .models import rf_kernel_matrix
from .segmentation import N_BINS, Segmentation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DriftMetricConfig:
    kind: str = "euclidean"  # euclidean | drift_geodesic | forest_kernel
    k_neighbors: int = 10
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("euclidean", "drift_geodesic", "forest_kernel"):
            raise UnknownKind(f"unknown metric {self.kind!r}")
        if self.k_neighbors < 2:
            raise ValueError("k_neighbors must be >= 2")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


def tv_rows(P: np.ndarray) -> np.ndarray:
    """Pairwise total variation between the rows of a probability matrix."""
    P = np.asarray(P, dtype=np.float64)
    return 0.5 * cdist(P, P, metric="cityblock")


def knn_graph(D: np.ndarray, k: int) -> np.ndarray:
    """Symmetric boolean adjacency of the k-nearest-neighbor graph under D."""
    n = D.shape[0]
    A = np.zeros((n, n), dtype=bool)
    k = min(k, n - 1)
    if k <= 0:
        return A
    order = np.argsort(D + np.diag(np.full(n, np.inf)), axis=1, kind="stable")[:, :k]
    A[np.repeat(np.arange(n), k), order.ravel()] = True
    return A | A.T


def connect_components(A: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Add the lightest inter-component edge until the graph is connected."""
    A = A.copy()
    while True:
        n_comp, labels = connected_components(csr_matrix(A), directed=False)
        if n_comp <= 1:
            return A
        cross = labels[:, None] != labels[None, :]
        masked = np.where(cross & np.isfinite(W), W, np.inf)
        i, j = np.unravel_index(np.argmin(masked), masked.shape)
        if not np.isfinite(masked[i, j]):
            raise DisconnectedGraph("no finite edge joins the graph components")
        A[i, j] = A[j, i] = True


def geodesic_distances(A: np.ndarray, W: np.ndarray) -> np.ndarray:
    """All-pairs shortest paths over edges ``A`` weighted by ``W``."""
    n = A.shape[0]
    # zero weights would vanish in a sparse matrix
    w = np.where(A, np.maximum(W, 1e-300), 0.0)
    D = shortest_path(csr_matrix(w), method="D", directed=False)
    if not np.all(np.isfinite(D)):
        raise DisconnectedGraph("graph is disconnected")
    D[np.arange(n), np.arange(n)] = 0.0
    # forward and backward sums can differ in the last bit
    return np.minimum(D, D.T)


def pairwise_drift_distance(X, model=None, cfg: DriftMetricConfig = DriftMetricConfig(),
                            time_dists: Optional[np.ndarray] = None) -> np.ndarray:
    """Symmetric distance matrix under the configured metric.

    The geodesic metric needs the predicted time distribution of every sample,
    taken from ``time_dists`` or from ``model.time_distribution``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise EmptyGroup("no samples")
    DX = cdist(X, X)
    if cfg.kind == "euclidean":
        return DX
    if cfg.kind == "forest_kernel":
        if model is None or not getattr(model, "is_forest", False):
            raise WrongModelKind("forest_kernel metric needs a forest model")
        D = 1.0 - rf_kernel_matrix(model, X)
        np.fill_diagonal(D, 0.0)
        return D
    if time_dists is None:
        if model is None or not hasattr(model, "time_distribution"):
            raise WrongModelKind("drift_geodesic metric needs a model or time distributions")
        time_dists = model.time_distribution(X)
    W = tv_rows(time_dists) + cfg.lam * DX
    A = knn_graph(DX, cfg.k_neighbors)
    A = connect_components(A, W)
    return geodesic_distances(A, W)


@dataclass
class Prototype:
    prototype: np.ndarray
    member_indices: list
    occurrence_profile: np.ndarray
    medoid_index: Optional[int] = None

    def to_dict(self) -> dict:
        return {"prototype": self.prototype.tolist(),
                "medoid_index": self.medoid_index,
                "member_indices": [int(i) for i in self.member_indices],
                "occurrence_profile": self.occurrence_profile.tolist()}


@dataclass
class PrototypeSet:
    groups: dict = field(default_factory=dict)  # group id -> list[Prototype]
    warnings: list = field(default_factory=list)
    metric: str = "euclidean"

    def to_dict(self) -> dict:
        return {"schema": "driftlens.prototypes/1", "metric": self.metric,
                "warnings": list(self.warnings),
                "groups": [{"group": str(g), "prototypes": [p.to_dict() for p in ps]}
                           for g, ps in self.groups.items()]}


def kmeans(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300):
    """Lloyd's algorithm with k-means++ seeding. Returns (centers, labels)."""
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(cdist(X, np.array(centers), "sqeuclidean"), axis=1)
        total = d2.sum()
        if total <= 0:
            remaining = [i for i in range(n) if not any(np.array_equal(X[i], c) for c in centers)]
            idx = remaining[0] if remaining else int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(X[idx])
    C = np.array(centers, dtype=np.float64)
    labels = np.full(n, -1)
    for _ in range(max_iter):
        new = np.argmin(cdist(X, C, "sqeuclidean"), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            if np.any(labels == j):
                C[j] = X[labels == j].mean(axis=0)
    return C, labels


def kmedoids(D: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100,
             trace: Optional[list] = None):
    """PAM-style k-medoids: greedy BUILD, then best-improvement swaps.

    Returns (medoid indices, labels). ``trace`` collects the objective after
    each accepted swap.
    """
    n = D.shape[0]
    medoids = [int(np.argmin(D.sum(axis=1)))]
    while len(medoids) < k:
        cur = D[:, medoids].min(axis=1)
        gains = np.maximum(cur[:, None] - D, 0.0).sum(axis=0)
        gains[medoids] = -np.inf
        medoids.append(int(np.argmax(gains)))
    medoids = np.array(medoids)
    cost = D[:, medoids].min(axis=1).sum()
    if trace is not None:
        trace.append(float(cost))
    for _ in range(max_iter):
        best = (cost, None, None)
        non = np.setdiff1d(np.arange(n), medoids)
        if non.size == 0:
            break
        for mi in range(k):
            others = np.delete(medoids, mi)
            base = D[:, others].min(axis=1) if len(others) else np.full(n, np.inf)
            costs = np.minimum(base[:, None], D[:, non]).sum(axis=0)
            j = int(np.argmin(costs))
            if costs[j] < best[0] - 1e-12:
                best = (costs[j], mi, non[j])
        if best[1] is None:
            break
        medoids[best[1]] = best[2]
        cost = best[0]
        if trace is not None:
            trace.append(float(cost))
    labels = np.argmin(D[:, medoids], axis=1)
    return medoids, labels


def select_prototypes(group_X, k: int, dist: Optional[np.ndarray] = None, seed: int = 0,
                      times=None, member_ids=None) -> list:
    """Cluster one group into ``k`` prototypes.

    Without ``dist`` this runs k-means on the raw features; with a distance
    matrix it runs k-medoids. Member indices refer to ``member_ids`` when
    given, else to rows of ``group_X``.
    """
    X = np.atleast_2d(np.asarray(group_X, dtype=np.float64))
    n = X.shape[0]
    if n == 0:
        raise EmptyGroup("group has no samples")
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} for a group of {n} samples")
    ids = np.arange(n) if member_ids is None else np.asarray(member_ids)
    rng = np.random.default_rng(seed)
    medoids = None
    if dist is None:
        C, labels = kmeans(X, k, rng)
    else:
        medoids, labels = kmedoids(np.asarray(dist), k, rng)
        C = X[medoids]
    out = []
    for j in range(k):
        members = ids[labels == j]
        prof = (time_histogram(np.asarray(times)[labels == j], N_BINS)
                if times is not None else np.zeros(N_BINS, dtype=np.int64))
        out.append(Prototype(C[j].copy(), members.tolist(), prof,
                             None if medoids is None else int(ids[medoids[j]])))
    return out


def groups_from(grouping) -> dict:
    """Group id -> sample indices for a locus report or a segmentation."""
    if isinstance(grouping, LocusReport):
        return {BEFORE: np.flatnonzero(grouping.region == BEFORE),
                AFTER: np.flatnonzero(grouping.region == AFTER)}
    if isinstance(grouping, Segmentation):
        return {f"segment:{s}": np.flatnonzero(grouping.assignments == s)
                for s in grouping.flagged}
    raise TypeError(f"unsupported grouping {type(grouping).__name__}")


def build_prototypes(ds, grouping, k_per_group: int = 3,
                     metric: DriftMetricConfig = DriftMetricConfig(), model=None,
                     seed: int = 0) -> PrototypeSet:
    """Prototypes for every drift region (locus) or flagged segment."""
    result = PrototypeSet(metric=metric.kind)
    time_dists = None
    if metric.kind == "drift_geodesic":
        if isinstance(grouping, LocusReport):
            p = grouping.p_after
            time_dists = np.column_stack([1 - p, p])
        elif isinstance(grouping, Segmentation):
            h = np.stack([grouping.segments[int(s)].time_histogram for s in grouping.assignments])
            time_dists = h / h.sum(axis=1, keepdims=True)
    groups = groups_from(grouping)
    if not groups or all(len(v) == 0 for v in groups.values()):
        msg = "no drifting groups; prototype set is empty"
        log.warning(msg)
        result.warnings.append(msg)
    for gi, (g, idx) in enumerate(groups.items()):
        if len(idx) == 0:
            msg = f"group {g} is empty; skipped"
            log.warning(msg)
            result.warnings.append(msg)
            continue
        k = k_per_group
        if k > len(idx):
            msg = f"group {g}: k={k_per_group} clamped to {len(idx)}"
            log.warning(msg)
            result.warnings.append(msg)
            k = len(idx)
        Xg = ds.X[idx]
        if metric.kind == "euclidean":
            dist = None
        else:
            dist = pairwise_drift_distance(
                Xg, model, metric, None if time_dists is None else time_dists[idx])
        group_seed = int(np.random.SeedSequence([seed, gi]).generate_state(1)[0])
        result.groups[g] = select_prototypes(Xg, k, dist, group_seed, ds.t[idx], idx)
    return result
