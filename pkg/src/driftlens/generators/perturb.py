"""Abrupt drift by perturbing features after a random change point."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import Dataset
from ..errors import TooManyFeatures, UnknownKind

PERTURBATIONS = ("zero", "shift", "gaussian_noise", "value_permutation")


@dataclass
class LabeledStream:
    dataset: Dataset
    drifting_features: np.ndarray
    change_point: Optional[float] = None
    provenance: dict = field(default_factory=dict)
    extra_truth: dict = field(default_factory=dict)

    def truth_dict(self) -> dict:
        out = {"drifting_features": [bool(v) for v in self.drifting_features],
               "feature_names": list(self.dataset.feature_names),
               "change_point": self.change_point,
               "provenance": self.provenance}
        for k, v in self.extra_truth.items():
            out[k] = [bool(b) for b in v] if isinstance(v, np.ndarray) else v
        return out

    def write_truth(self, path) -> None:
        Path(path).write_text(json.dumps(self.truth_dict(), indent=2, sort_keys=True),
                              encoding="utf-8")


def parse_perturbation(text: str) -> tuple:
    """``zero``, ``shift:D``, ``gaussian_noise`` / ``noise``, ``value_permutation`` / ``permute``."""
    head, _, arg = text.partition(":")
    head = {"noise": "gaussian_noise", "permute": "value_permutation",
            "permutation": "value_permutation", "constant": "zero"}.get(head, head)
    if head not in PERTURBATIONS:
        raise UnknownKind(f"unknown perturbation {text!r}")
    if head == "shift":
        return head, float(arg) if arg else 1.0
    return head, None


def perturb(ds: Dataset, kind: str, n_features: int = 1, seed: int = 0,
            delta: Optional[float] = None, change_point: Optional[float] = None) -> LabeledStream:
    """Perturb ``n_features`` random columns for every sample at or after the change point.

    ``kind`` may carry its argument (``"shift:5"``). The change point is drawn
    uniformly from (1/3, 2/3) unless given.
    """
    kind, arg = parse_perturbation(kind)
    if kind == "shift":
        delta = arg if delta is None else delta
    p = ds.n_features
    if not 1 <= n_features <= p:
        raise TooManyFeatures(f"cannot perturb {n_features} of {p} features")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD41F]))
    cp = float(rng.uniform(1 / 3, 2 / 3)) if change_point is None else float(change_point)
    cols = np.sort(rng.choice(p, size=n_features, replace=False))
    X = ds.X.copy()
    post = ds.t >= cp
    n_post = int(post.sum())
    for j in cols:
        if kind == "zero":
            X[post, j] = 0.0
        elif kind == "shift":
            X[post, j] = X[post, j] + delta
        elif kind == "gaussian_noise":
            X[post, j] = X[post, j] + rng.standard_normal(n_post)
        else:
            X[post, j] = X[post, j][rng.permutation(n_post)]
    truth = np.zeros(p, dtype=bool)
    truth[cols] = True
    prov = {"base": ds.meta.get("generator"), "base_seed": ds.meta.get("seed"),
            "perturbation": kind, "delta": delta, "n_features": n_features,
            "columns": cols.tolist(), "seed": seed}
    return LabeledStream(ds.replace(X=X, meta={**ds.meta, "perturbation": kind}),
                         truth, cp, prov)


def shuffle_baseline(ds: Dataset, seed: int = 0) -> Dataset:
    """Permute sample order and reassign the uniform time grid."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5FF1]))
    perm = rng.permutation(ds.n_samples)
    n = ds.n_samples
    t = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    return ds.replace(X=ds.X[perm], t=t)
