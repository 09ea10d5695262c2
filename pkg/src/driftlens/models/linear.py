"""Sparse linear baselines: L1 logistic regression and multi-output lasso."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from ..core import TimeEmbedding
from ..errors import WrongModelKind
from .trees import FitConfig, TimeModel, _check_X

PROBA_EPS = 1e-6


def _soft(v, lam):
    return np.sign(v) * max(abs(v) - lam, 0.0)


@dataclass
class LinearL1(TimeModel):
    """``weights`` is (p,) for the logistic case and (p, d) for lasso moments."""

    weights: np.ndarray
    bias: np.ndarray
    l1_strength: float
    embedding: TimeEmbedding
    config: FitConfig = field(default_factory=FitConfig)
    n_iter: int = 0
    kind = "linear_l1"

    @property
    def is_classifier(self) -> bool:
        return self.embedding.kind == "binary"

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return X @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        if not self.is_classifier:
            raise WrongModelKind("lasso moment model is not a classifier")
        p1 = np.clip(expit(self.decision_function(X)), PROBA_EPS, 1.0 - PROBA_EPS)
        return np.column_stack([1.0 - p1, p1])

    def predict_moments(self, X):
        if self.is_classifier:
            raise WrongModelKind("logistic model does not predict moments")
        out = self.decision_function(X)
        return np.zeros(out.shape[0], dtype=np.int64), out

    def time_distribution(self, X) -> np.ndarray:
        return self.predict_proba(X)

    def abs_weights(self) -> np.ndarray:
        w = np.abs(self.weights)
        return w if w.ndim == 1 else w.sum(axis=1)


def fit_logistic_l1(X, y, cfg: FitConfig = FitConfig(), tol: float = 1e-7,
                    max_iter: int = 2000, change_point: float = 0.5) -> LinearL1:
    """Minimize mean log-loss + l1 * |w|_1 by proximal coordinate descent.

    The intercept is unpenalized. Each coordinate step uses the curvature
    bound 1/4 * mean(x_j^2) of the logistic loss.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    lam = cfg.l1_strength
    w = np.zeros(p)
    ybar = np.clip(y.mean(), 1e-12, 1 - 1e-12)
    b = float(np.log(ybar / (1 - ybar)))
    z = np.full(n, b)
    lip = 0.25 * (X ** 2).mean(axis=0)
    it = 0
    for it in range(1, max_iter + 1):
        max_delta = 0.0
        r = expit(z) - y
        db = -r.mean() / 0.25
        b += db
        z += db
        max_delta = abs(db)
        for j in range(p):
            if lip[j] <= 0:
                continue
            r = expit(z) - y
            g = X[:, j] @ r / n
            new = _soft(w[j] - g / lip[j], lam / lip[j])
            delta = new - w[j]
            if delta != 0.0:
                w[j] = new
                z += delta * X[:, j]
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    return LinearL1(w, np.asarray(b), lam, TimeEmbedding.binary(change_point), cfg, it)


def fit_lasso_moments(X, Y, emb: TimeEmbedding, cfg: FitConfig = FitConfig(),
                      tol: float = 1e-8, max_iter: int = 1000) -> LinearL1:
    """Per-output lasso, (1/2n)|y - Xw - b|^2 + l1 * |w|_1, by coordinate descent."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = X.shape
    lam = cfg.l1_strength
    xm = X.mean(axis=0)
    Xc = X - xm
    a = (Xc ** 2).mean(axis=0)
    W = np.zeros((p, Y.shape[1]))
    B = np.zeros(Y.shape[1])
    total_it = 0
    for k in range(Y.shape[1]):
        ym = Y[:, k].mean()
        r = Y[:, k] - ym
        w = W[:, k]
        for it in range(1, max_iter + 1):
            max_delta = 0.0
            for j in range(p):
                if a[j] <= 0:
                    continue
                rho = Xc[:, j] @ r / n + a[j] * w[j]
                new = _soft(rho, lam) / a[j]
                delta = new - w[j]
                if delta != 0.0:
                    r -= delta * Xc[:, j]
                    w[j] = new
                    max_delta = max(max_delta, abs(delta))
            if max_delta < tol:
                break
        total_it = max(total_it, it)
        B[k] = ym - xm @ w
    return LinearL1(W, B, lam, emb, cfg, total_it)
