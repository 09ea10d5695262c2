"""Score feature rankings against generator ground truth and run experiment grids."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Dataset, TimeEmbedding
from .errors import DriftLensError, SingleClassTruth, UnknownKind
from .explainers.importance import IpfiState, impurity_importance, permutation_importance
from .generators import GENERATORS, gen_base, gen_bayes_net, perturb, random_bayes_spec
from .models import FitConfig, fit_time_model

log = logging.getLogger(__name__)

CSV_COLUMNS = ("generator", "perturbation", "k", "model", "method", "seed", "auc", "runtime_ms")
RECORD_SCHEMA = "driftlens.eval_record/1"
MODELS = ("forest", "tree", "linear")
METHODS = ("pfi", "model_fi", "ipfi")
BAYES_GENERATORS = ("bayes:complete", "bayes:shallow")


def feature_auc(scores, truth) -> float:
    """Probability that a random drifting feature outscores a random stable one (ties 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have the same length")
    pos, neg = scores[truth], scores[~truth]
    if pos.size == 0 or neg.size == 0:
        raise SingleClassTruth("ground truth needs both drifting and non-drifting features")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


@dataclass
class EvalRecord:
    generator: str
    perturbation: str
    k: int
    model: str
    method: str
    seed: int
    auc: float
    runtime_ms: int
    error: Optional[str] = None

    def row(self) -> dict:
        d = asdict(self)
        d.pop("error")
        d["auc"] = "" if not np.isfinite(self.auc) else repr(float(self.auc))
        return d

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = RECORD_SCHEMA
        d["auc"] = None if not np.isfinite(self.auc) else float(self.auc)
        return d


@dataclass
class GridSpec:
    generators: tuple = ("agrawal", "mixed", "random_rbf", "random_tree")
    perturbations: tuple = ("shift:5",)
    n_features: tuple = (1,)
    models: tuple = ("forest",)
    methods: tuple = ("pfi",)
    repeats: int = 20
    n: int = 1000
    seed: int = 0
    embedding: str = "fourier:5"
    n_repeats: int = 5
    holdout: float = 0.25
    window: int = 500
    refit_every: int = 50
    ipfi_capacity: int = 200
    ipfi_decay: float = 0.99
    bayes_mode_shape: tuple = (2, 2, 7, 3)
    full_scale: bool = False
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        for name in ("generators", "perturbations", "n_features", "models", "methods"):
            val = tuple(getattr(self, name))
            if not val:
                raise ValueError(f"grid axis {name} is empty")
            setattr(self, name, val)
        for g in self.generators:
            if g not in GENERATORS and g not in BAYES_GENERATORS:
                raise UnknownKind(f"unknown generator {g!r}")
        for m in self.models:
            if m not in MODELS:
                raise UnknownKind(f"unknown model {m!r}")
        for m in self.methods:
            if m not in METHODS:
                raise UnknownKind(f"unknown method {m!r}")
        if self.full_scale:
            self.repeats = 200
        self.bayes_mode_shape = tuple(self.bayes_mode_shape)

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        d = dict(d)
        fit = FitConfig(**d.pop("fit", {}))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grid keys {sorted(unknown)}")
        return cls(fit=fit, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["fit"] = self.fit.to_dict()
        return d

    def cells(self) -> list:
        """(generator, perturbation, k, model, method) in canonical order."""
        out = []
        for g in self.generators:
            perts = (("none", 0),) if g in BAYES_GENERATORS else \
                [(p, k) for p in self.perturbations for k in self.n_features]
            for p, k in perts:
                for m in self.models:
                    for meth in self.methods:
                        out.append((g, p, k, m, meth))
        return out


def make_stream(grid: GridSpec, generator: str, perturbation: str, k: int, seed: int):
    """(dataset, truth) for one cell; the same seed gives the same base data across cells."""
    if generator in BAYES_GENERATORS:
        nd, npar, nfar, nnone = grid.bayes_mode_shape
        mode = generator.split(":")[1]
        spec = random_bayes_spec(seed, nd, npar, nfar, nnone, mode=mode)
        ls = gen_bayes_net(spec, grid.n, seed)
        return ls.dataset.standardized(), ls.drifting_features
    base = gen_base(generator, grid.n, seed).standardized()
    ls = perturb(base, perturbation, k, seed)
    return ls.dataset, ls.drifting_features


def holdout_pfi(ds: Dataset, emb: TimeEmbedding, cfg: FitConfig, kind: str, holdout: float = 0.25,
                n_repeats: int = 5, seed: int = 0) -> np.ndarray:
    """Fit on a random (1 - holdout) share of the stream, permute on the rest."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4D]))
    n = ds.n_samples
    test = np.zeros(n, dtype=bool)
    test[rng.permutation(n)[: max(1, int(round(n * holdout)))]] = True
    m = fit_time_model(ds.X[~test], emb, cfg, kind, t=ds.t[~test])
    target = emb(ds.t[test])
    if emb.kind == "binary":
        target = target[:, 0]
    return permutation_importance(m, ds.X[test], target, "neg_mse", n_repeats, seed).scores


def windowed_ipfi(ds: Dataset, emb: TimeEmbedding, cfg: FitConfig, kind: str = "forest",
                  window: int = 500, refit_every: int = 50, capacity: int = 200,
                  decay: float = 0.99, seed: int = 0, trace: bool = False):
    """Online importance with a model refit on a sliding window.

    Every ``refit_every`` samples the model is refit on the last ``window``
    samples seen; the following block is scored by incremental PFI against
    that model. The first window only fills the reservoir.
    Returns the final ``IpfiState`` and, with ``trace``, the smoothed score
    after every sample (zeros before the first model exists).
    """
    n, p = ds.X.shape
    window = min(window, n)
    state = IpfiState(p, capacity, decay, seed=seed)
    target = emb(ds.t)
    if emb.kind == "binary":
        target = target[:, 0]
    out = np.zeros((n, p)) if trace else None
    state.update_many(None, ds.X[:window], target[:window])
    pos, r = window, 0
    while pos < n:
        lo = max(0, pos - window)
        m = fit_time_model(ds.X[lo:pos], emb, cfg.replace(seed=cfg.seed + r), kind,
                           t=ds.t[lo:pos])
        end = min(n, pos + refit_every)
        tr = state.update_many(m, ds.X[pos:end], target[pos:end], trace=trace)
        if trace:
            out[pos:end] = tr
        pos, r = end, r + 1
    return state, out


def importance_for(grid: GridSpec, ds: Dataset, model: str, method: str, seed: int) -> np.ndarray:
    cfg = grid.fit.replace(seed=seed)
    emb = TimeEmbedding.parse(grid.embedding, ds.n_samples)
    if method == "pfi":
        return holdout_pfi(ds, emb, cfg, model, grid.holdout, grid.n_repeats, seed)
    if method == "model_fi":
        return impurity_importance(fit_time_model(ds, emb, cfg, model)).scores
    state, _ = windowed_ipfi(ds, emb, cfg, model, grid.window, grid.refit_every,
                             grid.ipfi_capacity, grid.ipfi_decay, seed)
    return state.totals


def run_cell(grid: GridSpec, cell: tuple, seed: int) -> EvalRecord:
    g, pert, k, model, method = cell
    t0 = time.perf_counter()
    try:
        ds, truth = make_stream(grid, g, pert, k, seed)
        scores = importance_for(grid, ds, model, method, seed)
        auc, err = feature_auc(scores, truth), None
    except DriftLensError as exc:
        log.warning("cell %s seed %d failed: %s", cell, seed, exc)
        auc, err = float("nan"), f"{type(exc).__name__}: {exc}"
    ms = int(round((time.perf_counter() - t0) * 1000))
    return EvalRecord(g, pert, k, model, method, seed, auc, ms, err)


def repeat_seeds(grid: GridSpec) -> list:
    """Stream seeds shared by every cell so cells are paired on the same data."""
    ss = np.random.SeedSequence(grid.seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(grid.repeats)]


def summarize(records: list) -> dict:
    """Mean and std of AUC per cell, plus pooled over generators."""
    def stats(rs):
        a = np.array([r.auc for r in rs if np.isfinite(r.auc)])
        return {"mean": float(a.mean()) if a.size else None,
                "std": float(a.std(ddof=1)) if a.size > 1 else None,
                "n": int(a.size), "n_failed": len(rs) - int(a.size)}

    per, pooled = {}, {}
    for r in records:
        per.setdefault((r.generator, r.perturbation, r.k, r.model, r.method), []).append(r)
        pooled.setdefault((r.perturbation, r.k, r.model, r.method), []).append(r)
    return {
        "per_dataset": [dict(zip(("generator", "perturbation", "k", "model", "method"), key),
                             **stats(rs)) for key, rs in per.items()],
        "pooled": [dict(zip(("perturbation", "k", "model", "method"), key), **stats(rs))
                   for key, rs in pooled.items()],
        "errors": [{"generator": r.generator, "perturbation": r.perturbation, "k": r.k,
                    "model": r.model, "method": r.method, "seed": r.seed, "error": r.error}
                   for r in records if r.error],
    }


def write_records(records: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.row())


def read_records(path) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(EvalRecord(row["generator"], row["perturbation"], int(row["k"]),
                                  row["model"], row["method"], int(row["seed"]),
                                  float(row["auc"]) if row["auc"] else float("nan"),
                                  int(row["runtime_ms"])))
    return out


def run_grid(grid: GridSpec, out_path=None, summary_path=None, threads: int = 1,
             deterministic: bool = False) -> list:
    """Run every cell for every repeat seed; failures become records without an AUC.

    Records come back (and are written) in canonical cell-then-seed order
    regardless of ``threads``. ``deterministic`` drops runtimes from the
    written files so reruns are byte-identical.
    """
    seeds = repeat_seeds(grid)
    jobs = [(cell, s) for cell in grid.cells() for s in seeds]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            records = list(ex.map(lambda j: run_cell(grid, *j), jobs))
    else:
        records = [run_cell(grid, *j) for j in jobs]
    written = records
    if deterministic:
        written = [EvalRecord(**{**asdict(r), "runtime_ms": 0}) for r in records]
    if out_path is not None:
        write_records(written, out_path)
    if summary_path is not None:
        summary = {"config": grid.to_dict(), "seeds": seeds, **summarize(records)}
        Path(summary_path).write_text(json.dumps(summary, indent=2, sort_keys=True),
                                      encoding="utf-8")
    return records
