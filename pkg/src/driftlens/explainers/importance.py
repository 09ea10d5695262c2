"""Global feature importance of time models: batch and incremental PFI."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch
from ..models import LinearL1, model_feature_importance


@dataclass
class ImportanceReport:
    scores: np.ndarray
    method: str  # pfi | ipfi | model_fi | linear_weights
    n_repeats: int = 0
    baseline_metric: float = float("nan")
    std_errors: Optional[np.ndarray] = None
    feature_names: Optional[tuple] = None

    def ranking(self) -> np.ndarray:
        """Feature indices by descending score, lower index first on ties."""
        return np.lexsort((np.arange(len(self.scores)), -np.asarray(self.scores)))

    def to_dict(self) -> dict:
        se = None
        if self.std_errors is not None:
            se = [None if not np.isfinite(v) else float(v) for v in self.std_errors]
        base = self.baseline_metric
        return {"method": self.method,
                "scores": [float(v) for v in self.scores],
                "std_errors": se,
                "n_repeats": self.n_repeats,
                "baseline_metric": None if not np.isfinite(base) else float(base),
                "feature_names": None if self.feature_names is None else list(self.feature_names),
                "ranking": self.ranking().tolist()}


def model_output(m, X) -> np.ndarray:
    """p(after) for classifiers, the moment vector otherwise."""
    return m.predict(X)


def score(m, X, target, metric: str) -> float:
    """``accuracy`` (classifiers) or ``neg_mse`` summed over target components."""
    pred = model_output(m, X)
    target = np.asarray(target, dtype=np.float64)
    if metric == "accuracy":
        return float(np.mean((pred >= 0.5) == (target >= 0.5)))
    if metric == "neg_mse":
        err = (pred - target.reshape(pred.shape)) ** 2
        return -float(err.reshape(len(err), -1).sum(axis=1).mean())
    raise ValueError(f"unknown metric {metric!r}")


def permutation_importance(m, X, target, metric: str = "neg_mse", n_repeats: int = 5,
                           seed: int = 0, feature_names=None) -> ImportanceReport:
    """Baseline score minus mean score with one column permuted.

    Column ``j`` is shuffled with its own stream derived from (seed, j).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_features:
        raise DimensionMismatch(f"expected {m.n_features} features, got shape {X.shape}")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    baseline = score(m, X, target, metric)
    p = X.shape[1]
    scores = np.empty(p)
    se = np.empty(p)
    Xp = X.copy()
    for j in range(p):
        rng = np.random.default_rng(np.random.SeedSequence([seed, j]))
        drops = np.empty(n_repeats)
        for r in range(n_repeats):
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            drops[r] = baseline - score(m, Xp, target, metric)
        Xp[:, j] = X[:, j]
        scores[j] = drops.mean()
        se[j] = drops.std(ddof=1) / np.sqrt(n_repeats) if n_repeats > 1 else np.nan
    return ImportanceReport(scores, "pfi", n_repeats, baseline, se, feature_names)


def impurity_importance(m, feature_names=None) -> ImportanceReport:
    if isinstance(m, LinearL1):
        return ImportanceReport(m.abs_weights(), "linear_weights", feature_names=feature_names)
    return ImportanceReport(model_feature_importance(m), "model_fi", feature_names=feature_names)


def _loss(pred, target, loss: str) -> np.ndarray:
    if loss == "squared":
        pred = np.asarray(pred, dtype=np.float64)
        if pred.ndim == 1:
            pred = pred[:, None]
        diff = pred - np.asarray(target, dtype=np.float64).reshape(1, -1)
        return (diff ** 2).sum(axis=1)
    if loss == "zero_one":
        return ((np.asarray(pred) >= 0.5) != (np.asarray(target) >= 0.5)).astype(np.float64).ravel()
    raise ValueError(f"unknown loss {loss!r}")


@dataclass
class IpfiState:
    """Incremental permutation importance over a stream.

    Replacement values come from a FIFO reservoir of the last ``capacity``
    samples. ``decay`` < 1 gives an exponentially smoothed score; with
    ``decay == 1`` the smoothed score is the running mean of increments.
    ``totals`` always holds the plain sum over the stream.
    """

    n_features: int
    capacity: int = 200
    decay: float = 0.99
    warmup: int = 1
    seed: int = 0
    loss: str = "squared"
    reservoir: deque = field(init=False)
    accumulators: np.ndarray = field(init=False)
    totals: np.ndarray = field(init=False)
    n_seen: int = 0
    n_updates: int = 0

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.reservoir = deque(maxlen=self.capacity)
        self.accumulators = np.zeros(self.n_features)
        self.totals = np.zeros(self.n_features)
        self._rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x1BF1]))

    @property
    def scores(self) -> np.ndarray:
        return self.accumulators.copy()

    @property
    def mean_scores(self) -> np.ndarray:
        return self.totals / max(self.n_updates, 1)

    def update(self, m, x, target) -> "IpfiState":
        """Score sample ``x`` against the reservoir, then push it."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise DimensionMismatch(f"expected {self.n_features} features, got {x.shape}")
        if len(self.reservoir) >= max(self.warmup, 1) and m is not None:
            picks = (self._rng.random(self.n_features) * len(self.reservoir)).astype(np.int64)
            batch = np.repeat(x[None, :], self.n_features + 1, axis=0)
            for j in range(self.n_features):
                batch[j + 1, j] = self.reservoir[picks[j]][j]
            losses = _loss(model_output(m, batch), target, self.loss)
            self._accumulate(losses[1:] - losses[0])
        self.reservoir.append(x.copy())
        self.n_seen += 1
        return self

    def _accumulate(self, inc) -> None:
        self.n_updates += 1
        self.totals += inc
        if self.decay < 1.0:
            self.accumulators = self.decay * self.accumulators + (1.0 - self.decay) * inc
        else:
            self.accumulators += (inc - self.accumulators) / self.n_updates

    def update_many(self, m, X, targets, trace: bool = False):
        """Same result as calling ``update`` row by row, with one model call.

        With ``trace=True`` returns the smoothed scores after every row.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got shape {X.shape}")
        B, p = X.shape
        if B == 0:
            return np.empty((0, p)) if trace else None
        targets = np.asarray(targets, dtype=np.float64).reshape(B, -1)
        hist = np.vstack([np.array(self.reservoir).reshape(-1, p), X])
        r0 = len(self.reservoir)
        pos = r0 + np.arange(B)
        start = np.maximum(0, pos - self.capacity)
        length = pos - start
        active = (length >= max(self.warmup, 1)) if m is not None else np.zeros(B, dtype=bool)
        out = np.empty((B, p)) if trace else None
        rows = np.flatnonzero(active)
        incs = np.empty((0, p))
        if rows.size:
            U = self._rng.random((rows.size, p))
            picks = start[rows, None] + (U * length[rows, None]).astype(np.int64)
            batch = np.repeat(X[rows, None, :], p + 1, axis=1)
            cols = np.arange(p)
            batch[:, cols + 1, cols] = hist[picks, cols]
            pred = model_output(m, batch.reshape(-1, p))
            pred = np.asarray(pred, dtype=np.float64).reshape(rows.size, p + 1, -1)
            tg = targets[rows][:, None, :]
            if self.loss == "squared":
                losses = ((pred - tg) ** 2).sum(axis=2)
            else:
                losses = ((pred[:, :, 0] >= 0.5) != (tg[:, :, 0] >= 0.5)).astype(np.float64)
            incs = losses[:, 1:] - losses[:, :1]
        k = 0
        for b in range(B):
            if active[b]:
                self._accumulate(incs[k])
                k += 1
            self.reservoir.append(X[b].copy())
            self.n_seen += 1
            if trace:
                out[b] = self.accumulators
        return out

    def report(self, aggregate: str = "decayed", feature_names=None) -> ImportanceReport:
        scores = {"decayed": self.scores, "sum": self.totals.copy(),
                  "mean": self.mean_scores}[aggregate]
        return ImportanceReport(scores, "ipfi", self.n_updates, feature_names=feature_names)


def ipfi_update(state: IpfiState, m, x, target) -> IpfiState:
    return state.update(m, x, target)
