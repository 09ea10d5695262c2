"""Drift localization: score samples by how well their time can be predicted.

A before/after classifier is cross-fitted; a sample belongs to the drift locus
when the KL divergence between its out-of-fold prediction and the label prior
reaches a threshold. Thresholds come from runs with permuted time labels.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Dataset, split_at
from .errors import DegenerateSplit, DomainError, TooFewSamples
from .models import FitConfig, fit_prob_classifier

log = logging.getLogger(__name__)

BEFORE, AFTER, NOT_DRIFTING = "before", "after", "not_drifting"
REGION_CODES = {NOT_DRIFTING: 0, BEFORE: 1, AFTER: 2}


def kl_bernoulli(p, q):
    """KL(Bernoulli(p) || Bernoulli(q)); vectorized over arrays."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any((p <= 0) | (p >= 1)) or np.any((q <= 0) | (q >= 1)):
        raise DomainError("KL arguments must lie strictly inside (0, 1)")
    out = p * np.log(p / q) + (1 - p) * np.log((1 - p) / (1 - q))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class LocusReport:
    change_point: float
    kl_scores: np.ndarray
    p_after: np.ndarray
    prior: float
    theta: float
    in_locus: np.ndarray
    region: np.ndarray  # object array of region names
    folds: int = 10
    config: dict = field(default_factory=dict)

    @property
    def locus_fraction(self) -> float:
        return float(self.in_locus.mean())

    def region_codes(self) -> np.ndarray:
        return np.array([REGION_CODES[r] for r in self.region], dtype=np.int64)

    def with_theta(self, theta: float) -> "LocusReport":
        in_locus, region = assign_regions(self.kl_scores, self.p_after, self.prior, theta)
        return LocusReport(self.change_point, self.kl_scores, self.p_after, self.prior,
                           float(theta), in_locus, region, self.folds, dict(self.config))

    def to_dict(self) -> dict:
        return {
            "schema": "driftlens.locus/1",
            "change_point": self.change_point,
            "prior": self.prior,
            "theta": self.theta,
            "folds": self.folds,
            "config": self.config,
            "samples": [
                {"index": i, "kl": float(k), "p_after": float(p),
                 "in_locus": bool(b), "region": str(r)}
                for i, (k, p, b, r) in enumerate(
                    zip(self.kl_scores, self.p_after, self.in_locus, self.region))
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LocusReport":
        s = d["samples"]
        return cls(
            change_point=float(d["change_point"]),
            kl_scores=np.array([r["kl"] for r in s], dtype=np.float64),
            p_after=np.array([r["p_after"] for r in s], dtype=np.float64),
            prior=float(d["prior"]),
            theta=float(d["theta"]),
            in_locus=np.array([r["in_locus"] for r in s], dtype=bool),
            region=np.array([r["region"] for r in s], dtype=object),
            folds=int(d.get("folds", 10)),
            config=d.get("config", {}),
        )


def assign_regions(kl_scores, p_after, prior, theta):
    in_locus = np.asarray(kl_scores) >= theta
    region = np.full(in_locus.shape, NOT_DRIFTING, dtype=object)
    after = np.asarray(p_after) >= prior
    region[in_locus & ~after] = BEFORE
    region[in_locus & after] = AFTER
    return in_locus, region


def _fold_ids(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    if folds >= n:
        return np.arange(n)
    ids = np.arange(n) % folds
    return ids[rng.permutation(n)]


def crossfit_scores(X, labels, cfg: FitConfig, folds: int = 10, kind: str = "forest",
                    seed: Optional[int] = None):
    """Out-of-fold p(after) and KL-to-prior per sample.

    ``folds >= n`` gives leave-one-out. The prior for each held-out fold is
    the label mean of the training folds. Fold models reuse ``cfg`` but get
    their own seed derived from (seed, fold).
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = X.shape[0]
    if folds < 2:
        raise ValueError("folds must be >= 2")
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x10C]))
    fid = _fold_ids(n, folds, rng)
    p_after = np.empty(n)
    h0 = np.empty(n)
    for f in range(min(folds, n)):
        test = fid == f
        if not test.any():
            continue
        train = ~test
        y_tr = labels[train]
        sub = np.random.SeedSequence([seed, 0xF01D, f]).generate_state(1)[0]
        m = fit_prob_classifier(X[train], y_tr, cfg.replace(seed=int(sub)), kind)
        p_after[test] = m.predict_proba(X[test])[:, 1]
        h0[test] = y_tr.mean()
    h0c = np.clip(h0, 1e-12, 1 - 1e-12)
    kl = kl_bernoulli(np.clip(p_after, 1e-12, 1 - 1e-12), h0c)
    return p_after, kl


def _labels(ds: Dataset, change_point: float) -> np.ndarray:
    split_at(ds, change_point)  # validates both sides non-empty
    return (ds.t >= change_point).astype(np.float64)


def calibrate_threshold(ds: Dataset, change_point: float, cfg: FitConfig = FitConfig(),
                        n_null: int = 20, quantile: float = 0.95, folds: int = 10,
                        kind: str = "forest") -> float:
    """Null quantile of KL scores over ``n_null`` label permutations."""
    if n_null < 10:
        raise ValueError("n_null must be >= 10")
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    null_scores = null_kl_scores(ds, change_point, cfg, n_null, folds, kind)
    return float(np.quantile(null_scores, quantile))


def null_kl_scores(ds: Dataset, change_point: float, cfg: FitConfig, n_null: int,
                   folds: int = 10, kind: str = "forest") -> np.ndarray:
    labels = _labels(ds, change_point)
    _check_size(ds, cfg, folds)
    out = []
    for r in range(n_null):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x0DD, r]))
        perm = rng.permutation(labels)
        _, kl = crossfit_scores(ds.X, perm, cfg, folds, kind,
                                seed=int(rng.integers(0, 2**62)))
        out.append(kl)
    return np.concatenate(out)


def _check_size(ds: Dataset, cfg: FitConfig, folds: int):
    n = ds.n_samples
    k = min(folds, n)
    if n - int(math.ceil(n / k)) < 2 * cfg.min_leaf:
        raise TooFewSamples(f"{n} samples too few for {folds}-fold fits with min_leaf {cfg.min_leaf}")


def localize(ds: Dataset, change_point: float, cfg: FitConfig = FitConfig(),
             folds: int = 10, theta: Optional[float] = None, kind: str = "forest",
             n_null: int = 20, quantile: float = 0.95) -> LocusReport:
    """Cross-fitted drift localization at a known change point.

    ``theta=None`` calibrates the threshold from ``n_null`` permuted-label
    runs at ``quantile``.
    """
    labels = _labels(ds, change_point)
    _check_size(ds, cfg, folds)
    p_after, kl = crossfit_scores(ds.X, labels, cfg, folds, kind)
    if theta is None:
        theta = calibrate_threshold(ds, change_point, cfg, n_null, quantile, folds, kind)
    prior = float(labels.mean())
    in_locus, region = assign_regions(kl, p_after, prior, theta)
    conf = {"fit": cfg.to_dict(), "kind": kind, "n_null": n_null, "quantile": quantile}
    return LocusReport(float(change_point), kl, p_after, prior, float(theta),
                       in_locus, region, folds, conf)


def scan_change_point(ds: Dataset, candidates=None, cfg: FitConfig = FitConfig(),
                      folds: int = 5, kind: str = "forest"):
    """Convenience change-point search, not a drift detector.

    Returns the candidate maximizing mean out-of-fold KL, with all scores.
    """
    if candidates is None:
        candidates = np.linspace(0.1, 0.9, 9)
    scores = []
    for cp in candidates:
        try:
            labels = _labels(ds, cp)
        except DegenerateSplit:
            scores.append(-np.inf)
            continue
        _, kl = crossfit_scores(ds.X, labels, cfg, folds, kind)
        scores.append(float(kl.mean()))
    best = int(np.argmax(scores))
    return float(candidates[best]), np.asarray(scores)
