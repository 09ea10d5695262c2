"""Drift segmentation with moment trees.

The leaves of a regression tree fit to embedded time are segments within
which time is (approximately) independent of the data. Segments whose time
histogram departs from the global one are flagged as drifting.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import Dataset, TimeEmbedding, time_histogram
from .errors import MismatchedDataset, UnknownKind
from .models import FitConfig, MomentTree, fit_moment_tree
from .models.io import model_from_dict, model_to_dict

N_BINS = 10


@dataclass
class SegmentInfo:
    size: int
    moment_vector: np.ndarray
    time_histogram: np.ndarray
    tv_distance: float = 0.0
    drift_flag: bool = False

    @property
    def mean_time_bin_center(self) -> float:
        centers = (np.arange(len(self.time_histogram)) + 0.5) / len(self.time_histogram)
        return float(centers @ self.time_histogram / max(self.time_histogram.sum(), 1))


@dataclass
class Segmentation:
    assignments: np.ndarray
    segments: dict
    embedding: TimeEmbedding
    model: MomentTree
    global_histogram: np.ndarray
    threshold: float = 0.0
    n_samples: int = 0
    config: dict = field(default_factory=dict)

    @property
    def flagged(self) -> list:
        return sorted(s for s, info in self.segments.items() if info.drift_flag)

    def to_dict(self, include_model: bool = True) -> dict:
        out = {
            "schema": "driftlens.segmentation/1",
            "embedding": self.embedding.to_dict(),
            "threshold": self.threshold,
            "n_samples": self.n_samples,
            "global_histogram": self.global_histogram.tolist(),
            "assignments": self.assignments.tolist(),
            "segments": [
                {"id": int(s), "size": info.size,
                 "moment_vector": info.moment_vector.tolist(),
                 "time_histogram": info.time_histogram.tolist(),
                 "tv_distance": info.tv_distance,
                 "drift_flag": info.drift_flag}
                for s, info in sorted(self.segments.items())
            ],
            "config": self.config,
        }
        if include_model:
            out["model"] = model_to_dict(self.model)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Segmentation":
        segs = {
            int(s["id"]): SegmentInfo(int(s["size"]), np.asarray(s["moment_vector"], float),
                                      np.asarray(s["time_histogram"], dtype=np.int64),
                                      float(s["tv_distance"]), bool(s["drift_flag"]))
            for s in d["segments"]
        }
        model = model_from_dict(d["model"]) if "model" in d else None
        return cls(np.asarray(d["assignments"], dtype=np.int64), segs,
                   TimeEmbedding.from_dict(d["embedding"]), model,
                   np.asarray(d["global_histogram"], dtype=np.int64),
                   float(d["threshold"]), int(d["n_samples"]), d.get("config", {}))


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


def flag_drifting_segments(seg: Segmentation, metric: str = "total_variation",
                           threshold: float = 0.2) -> Segmentation:
    if metric != "total_variation":
        raise UnknownKind(f"unknown segment metric {metric!r}")
    segments = {}
    for s, info in seg.segments.items():
        tv = total_variation(info.time_histogram, seg.global_histogram)
        segments[s] = replace(info, tv_distance=tv, drift_flag=bool(tv >= threshold))
    return replace(seg, segments=segments, threshold=float(threshold))


def _build(ds: Dataset, model: MomentTree, emb: TimeEmbedding) -> Segmentation:
    ids = model.tree.leaves(ds.X)
    segments = {}
    for node in model.tree.leaf_nodes():
        sid = int(model.tree.leaf_id[node])
        members = ids == sid
        segments[sid] = SegmentInfo(int(members.sum()), model.tree.value[node].copy(),
                                    time_histogram(ds.t[members], N_BINS))
    return Segmentation(ids, segments, emb, model, time_histogram(ds.t, N_BINS),
                        n_samples=ds.n_samples)


def null_tv_threshold(ds: Dataset, emb: TimeEmbedding, cfg: FitConfig = FitConfig(),
                      n_null: int = 20, quantile: float = 0.95) -> float:
    """Quantile of segment TV distances over trees fit to permuted times."""
    tvs = []
    for r in range(n_null):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5E6, r]))
        t_perm = rng.permutation(ds.t)
        m = fit_moment_tree(ds.X, emb, cfg, t=t_perm)
        ids = m.tree.leaves(ds.X)
        g = time_histogram(t_perm, N_BINS)
        for sid in np.unique(ids):
            tvs.append(total_variation(time_histogram(t_perm[ids == sid], N_BINS), g))
    return float(np.quantile(tvs, quantile))


def segment(ds: Dataset, emb: TimeEmbedding, cfg: FitConfig = FitConfig(),
            threshold: Optional[float] = None, n_null: int = 20,
            quantile: float = 0.95) -> Segmentation:
    """Fit a moment tree and read its leaves as drift segments.

    ``threshold=None`` calibrates the TV flag threshold on permuted times.
    """
    if emb.kind == "binary":
        raise UnknownKind("segmentation needs a polynomial or Fourier embedding")
    model = fit_moment_tree(ds, emb, cfg)
    seg = _build(ds, model, emb)
    if threshold is None:
        threshold = null_tv_threshold(ds, emb, cfg, n_null, quantile)
    seg = flag_drifting_segments(seg, "total_variation", threshold)
    seg.config = {"fit": cfg.to_dict(), "n_null": n_null, "quantile": quantile}
    return seg


def segmentation_mse(seg: Segmentation, ds: Dataset) -> float:
    """Mean over samples of the squared distance to the segment moment vector."""
    if len(seg.assignments) != ds.n_samples:
        raise MismatchedDataset("segmentation was built on a different dataset")
    Y = seg.embedding(ds.t)
    V = np.stack([seg.segments[int(s)].moment_vector for s in seg.assignments])
    return float(((Y - V) ** 2).sum(axis=1).mean())
