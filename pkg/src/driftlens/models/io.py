"""Versioned JSON serialization of fitted models."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..core import TimeEmbedding
from ..errors import WrongModelKind
from .linear import LinearL1
from .trees import FitConfig, MomentForest, MomentTree, ProbForest, ProbTree, Tree

FORMAT = "driftlens.model"
VERSION = 1


def model_to_dict(m) -> dict:
    out = {"format": FORMAT, "version": VERSION, "kind": m.kind,
           "config": m.config.to_dict()}
    if isinstance(m, (MomentTree, MomentForest, LinearL1)):
        out["embedding"] = m.embedding.to_dict()
    if isinstance(m, (MomentTree, ProbTree)):
        out["trees"] = [m.tree.to_dict()]
    elif isinstance(m, (MomentForest, ProbForest)):
        out["trees"] = [tr.to_dict() for tr in m.trees]
    elif isinstance(m, LinearL1):
        out["weights"] = m.weights.tolist()
        out["bias"] = np.asarray(m.bias).tolist()
        out["l1_strength"] = m.l1_strength
        out["n_iter"] = m.n_iter
    else:
        raise WrongModelKind(f"cannot serialize {type(m).__name__}")
    return out


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ValueError("not a driftlens model document")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    cfg = FitConfig(**d["config"])
    kind = d["kind"]
    emb = TimeEmbedding.from_dict(d["embedding"]) if "embedding" in d else None
    if kind == "moment_tree":
        return MomentTree(Tree.from_dict(d["trees"][0]), emb, cfg)
    if kind == "prob_tree":
        return ProbTree(Tree.from_dict(d["trees"][0]), cfg)
    if kind == "moment_forest":
        return MomentForest([Tree.from_dict(t) for t in d["trees"]], emb, cfg)
    if kind == "prob_forest":
        return ProbForest([Tree.from_dict(t) for t in d["trees"]], cfg)
    if kind == "linear_l1":
        return LinearL1(np.asarray(d["weights"], dtype=np.float64),
                        np.asarray(d["bias"], dtype=np.float64),
                        float(d["l1_strength"]), emb, cfg, int(d.get("n_iter", 0)))
    raise WrongModelKind(f"unknown model kind {kind!r}")


def dumps(m) -> str:
    return json.dumps(model_to_dict(m), sort_keys=True)


def loads(s: str):
    return model_from_dict(json.loads(s))


def save_model(m, path) -> None:
    Path(path).write_text(dumps(m), encoding="utf-8")


def load_model(path):
    return loads(Path(path).read_text(encoding="utf-8"))
