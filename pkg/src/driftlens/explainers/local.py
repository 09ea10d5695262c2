"""Local explanations: weighted linear surrogates and dataset counterfactuals."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import NoTargetSamples, WrongModelKind
from ..localization import AFTER, BEFORE, LocusReport

log = logging.getLogger(__name__)

OPPOSITE = {BEFORE: AFTER, AFTER: BEFORE}


@dataclass
class LocalSurrogate:
    anchor: np.ndarray
    coefficients: np.ndarray
    intercept: float
    kernel_width: float
    n_samples: int
    fit_r2: float
    ridge_jitter: bool = False

    def to_dict(self) -> dict:
        return {"anchor": self.anchor.tolist(),
                "coefficients": self.coefficients.tolist(),
                "intercept": self.intercept,
                "kernel_width": None if not np.isfinite(self.kernel_width) else self.kernel_width,
                "n_samples": self.n_samples,
                "fit_r2": self.fit_r2,
                "ridge_jitter": self.ridge_jitter}


def time_score(m, X) -> np.ndarray:
    """Scalar time signal explained by surrogates.

    p(after) for classifiers; for moment models the expected time under the
    leaf occurrence histogram.
    """
    if callable(m) and not hasattr(m, "kind"):
        return np.asarray(m(X), dtype=np.float64)
    if m.is_classifier:
        return m.predict_proba(X)[:, 1]
    if hasattr(m, "time_distribution"):
        P = m.time_distribution(X)
        centers = (np.arange(P.shape[1]) + 0.5) / P.shape[1]
        return P @ centers
    raise WrongModelKind(f"{m.kind} has no scalar time output")


def local_surrogate(m, anchor, n_samples: int = 1000, sigma: float = 0.5,
                    kernel_width: Optional[float] = None, seed: int = 0,
                    feature_std=None) -> LocalSurrogate:
    """Weighted least-squares fit of the model's time score around ``anchor``.

    Perturbations are Gaussian with per-feature std ``sigma * feature_std``;
    weights are ``exp(-d^2 / kernel_width^2)`` with ``d`` the L2 distance to
    the anchor. ``kernel_width=inf`` gives plain least squares.
    ``m`` may also be a plain callable ``X -> values``.
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    p = anchor.shape[0]
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if kernel_width is None:
        kernel_width = 0.75 * np.sqrt(p)
    std = np.ones(p) if feature_std is None else np.asarray(feature_std, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51A]))
    Z = anchor + rng.standard_normal((n_samples, p)) * (sigma * std)
    y = time_score(m, Z)
    d2 = ((Z - anchor) ** 2).sum(axis=1)
    w = np.ones(n_samples) if np.isinf(kernel_width) else np.exp(-d2 / kernel_width ** 2)
    A = np.column_stack([np.ones(n_samples), Z - anchor])
    sw = np.sqrt(w)
    jitter = False
    if w.sum() <= 1e-12 * n_samples:
        jitter = True
        w = np.full(n_samples, 1e-12)
        sw = np.sqrt(w)
    Aw = A * sw[:, None]
    yw = y * sw
    rank = np.linalg.matrix_rank(Aw)
    if rank < A.shape[1]:
        jitter = True
        lam = 1e-8 * max(1.0, float(np.trace(Aw.T @ Aw)))
        beta = np.linalg.solve(Aw.T @ Aw + lam * np.eye(A.shape[1]), Aw.T @ yw)
    else:
        beta = np.linalg.lstsq(Aw, yw, rcond=None)[0]
    if jitter:
        log.warning("local surrogate fit was singular; ridge jitter applied")
    resid = y - A @ beta
    ybar = np.average(y, weights=w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    ss_res = float(np.sum(w * resid ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res <= 1e-24 else 0.0)
    # intercept is reported at the origin of feature space
    coef = beta[1:]
    intercept = float(beta[0] - coef @ anchor)
    return LocalSurrogate(anchor, coef, intercept, float(kernel_width), n_samples, r2, jitter)


@dataclass
class Counterfactual:
    original_index: int
    counterfactual_index: int
    distance: float
    original_region: str
    target_region: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _regions_of(grouping) -> np.ndarray:
    if isinstance(grouping, LocusReport):
        return grouping.region
    return np.asarray(grouping, dtype=object)


def nearest_counterfactual(X, grouping, original_index: int, D=None) -> Counterfactual:
    """Closest sample of the opposite drift region (ties -> lowest index).

    ``D`` is an optional full distance matrix; Euclidean distance otherwise.
    """
    X = np.asarray(getattr(X, "X", X), dtype=np.float64)
    regions = _regions_of(grouping)
    i = int(original_index)
    own = regions[i]
    if own not in OPPOSITE:
        raise NoTargetSamples(f"sample {i} is not in a drift region ({own})")
    target = OPPOSITE[own]
    cand = np.flatnonzero(regions == target)
    cand = cand[cand != i]
    if cand.size == 0:
        raise NoTargetSamples(f"no samples in region {target}")
    if D is None:
        dist = np.sqrt(((X[cand] - X[i]) ** 2).sum(axis=1))
    else:
        dist = np.asarray(D)[i, cand]
    j = int(np.argmin(dist))  # first minimum = lowest index, cand is sorted
    return Counterfactual(i, int(cand[j]), float(dist[j]), str(own), target)
