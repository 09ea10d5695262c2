"""End-to-end drift explanation: preprocess, fit, group, explain."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..core import Dataset, TimeEmbedding
from ..errors import DriftLensError, NoTargetSamples
from ..localization import AFTER, BEFORE, NOT_DRIFTING, localize
from ..models import FitConfig, fit_prob_classifier, fit_time_model
from ..prototypes import DriftMetricConfig, build_prototypes, pairwise_drift_distance
from ..segmentation import segment
from .importance import IpfiState, impurity_importance, permutation_importance
from .local import local_surrogate, nearest_counterfactual

log = logging.getLogger(__name__)

BUNDLE_SCHEMA = "driftlens.bundle/1"
METHODS = ("pfi", "model_fi", "ipfi", "prototypes", "surrogate", "counterfactuals")


@dataclass
class ExplainPlan:
    grouping: str = "localize"  # localize | segment
    change_point: Optional[float] = 0.5
    embedding: str = "poly:5"
    methods: tuple = ("pfi",)
    model: str = "forest"
    folds: int = 10
    theta: Optional[float] = None
    n_null: int = 20
    quantile: float = 0.95
    n_repeats: int = 5
    k_per_group: int = 3
    metric: str = "euclidean"
    k_neighbors: int = 10
    lam: float = 1.0
    surrogate_samples: int = 1000
    sigma: float = 0.5
    kernel_width: Optional[float] = None
    segment_threshold: Optional[float] = None
    ipfi_capacity: int = 200
    ipfi_decay: float = 0.99
    seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.grouping not in ("localize", "segment"):
            raise ValueError(f"unknown grouping {self.grouping!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown explainer methods {bad}")
        self.methods = tuple(self.methods)

    @classmethod
    def from_dict(cls, d: dict) -> "ExplainPlan":
        d = dict(d)
        fit = d.pop("fit", {})
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown plan keys {sorted(unknown)}")
        return cls(fit=FitConfig(**fit), **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["fit"] = self.fit.to_dict()
        return d


@dataclass
class ExplanationBundle:
    plan: ExplainPlan
    reports: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.errors)

    def to_dict(self) -> dict:
        return {"schema": BUNDLE_SCHEMA, "seed": self.plan.seed,
                "config": self.plan.to_dict(), "partial": self.partial,
                "reports": self.reports, "errors": list(self.errors)}


def _crossfit_pfi(X, labels, cfg, kind, folds, n_repeats, seed, names):
    """Permutation importance on held-out folds, averaged over folds."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCF]))
    n = len(labels)
    fid = (np.arange(n) % folds)[rng.permutation(n)]
    per_fold, base = [], []
    for f in range(folds):
        test = fid == f
        m = fit_prob_classifier(X[~test], labels[~test], cfg.replace(seed=cfg.seed + f), kind)
        rep = permutation_importance(m, X[test], labels[test], "neg_mse", n_repeats,
                                     seed + f, names)
        per_fold.append(rep.scores)
        base.append(rep.baseline_metric)
    per_fold = np.array(per_fold)
    rep.scores = per_fold.mean(axis=0)
    rep.std_errors = per_fold.std(axis=0, ddof=1) / np.sqrt(folds)
    rep.baseline_metric = float(np.mean(base))
    return rep


def _holdout_pfi(X, t, emb, cfg, kind, n_repeats, seed, names):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4D]))
    n = X.shape[0]
    test = np.zeros(n, dtype=bool)
    test[rng.permutation(n)[: max(1, n // 4)]] = True
    m = fit_time_model(X[~test], emb, cfg, kind, t=t[~test])
    target = emb(t[test])
    metric = "neg_mse"
    if emb.kind == "binary":
        target = target[:, 0]
    return permutation_importance(m, X[test], target, metric, n_repeats, seed, names)


def _stream_ipfi(m, X, target, plan: ExplainPlan, names):
    state = IpfiState(X.shape[1], plan.ipfi_capacity, plan.ipfi_decay, seed=plan.seed)
    for x, y in zip(X, target):
        state.update(m, x, y)
    return state.report("sum", names)


def _segment_regions(seg) -> np.ndarray:
    """Before/after reduction of flagged segments by their dominant time half."""
    regions = np.full(seg.n_samples, NOT_DRIFTING, dtype=object)
    for s in seg.flagged:
        h = seg.segments[s].time_histogram
        half = len(h) // 2
        regions[seg.assignments == s] = BEFORE if h[:half].sum() > h[half:].sum() else AFTER
    return regions


def explain_drift(ds: Dataset, plan: ExplainPlan) -> ExplanationBundle:
    """Run the plan; failures of single methods are recorded, not raised."""
    bundle = ExplanationBundle(plan)
    names = ds.feature_names
    cfg = plan.fit.replace(seed=plan.seed)
    X = ds.X
    methods = set(plan.methods)

    if plan.grouping == "localize":
        emb = TimeEmbedding.binary(plan.change_point)
        grouping = localize(ds, plan.change_point, cfg, plan.folds, plan.theta, plan.model,
                            plan.n_null, plan.quantile)
        bundle.reports["grouping"] = grouping.to_dict()
        labels = emb(ds.t)[:, 0]
        model = fit_prob_classifier(X, labels, cfg, plan.model)
        regions = grouping.region
        time_dists = np.column_stack([1 - grouping.p_after, grouping.p_after])
    else:
        emb = TimeEmbedding.parse(plan.embedding, ds.n_samples)
        grouping = segment(ds, emb, cfg, plan.segment_threshold, plan.n_null, plan.quantile)
        bundle.reports["grouping"] = grouping.to_dict(include_model=False)
        model = grouping.model
        regions = _segment_regions(grouping)
        time_dists = None

    def attempt(name, fn):
        try:
            bundle.reports[name] = fn()
        except DriftLensError as exc:
            log.warning("%s failed: %s", name, exc)
            bundle.errors.append({"method": name, "error": type(exc).__name__,
                                  "message": str(exc)})

    if "pfi" in methods:
        if plan.grouping == "localize":
            attempt("pfi", lambda: _crossfit_pfi(X, labels, cfg, plan.model, min(plan.folds, 5),
                                                 plan.n_repeats, plan.seed, names).to_dict())
        else:
            attempt("pfi", lambda: _holdout_pfi(X, ds.t, emb, cfg, plan.model, plan.n_repeats,
                                                plan.seed, names).to_dict())
    if "model_fi" in methods:
        attempt("model_fi", lambda: impurity_importance(model, names).to_dict())
    if "ipfi" in methods:
        target = emb(ds.t)
        if emb.kind == "binary":
            target = target[:, 0]
        attempt("ipfi", lambda: _stream_ipfi(model, X, target, plan, names).to_dict())

    local = methods & {"prototypes", "surrogate", "counterfactuals"}
    if not local:
        return bundle
    metric = DriftMetricConfig(plan.metric, plan.k_neighbors, plan.lam)
    protos = build_prototypes(ds, grouping, plan.k_per_group, metric, model, plan.seed)
    bundle.reports["prototypes"] = protos.to_dict()

    anchors = []
    for g, plist in protos.groups.items():
        for pi, proto in enumerate(plist):
            idx = proto.medoid_index
            if idx is None:
                members = np.asarray(proto.member_indices)
                idx = int(members[np.argmin(((X[members] - proto.prototype) ** 2).sum(axis=1))])
            anchors.append((g, pi, idx, proto.prototype))

    if "surrogate" in methods:
        out = []
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        for g, pi, idx, anchor in anchors:
            sur = local_surrogate(model, anchor, plan.surrogate_samples, plan.sigma,
                                  plan.kernel_width, plan.seed + pi, std)
            d = sur.to_dict()
            d.update(group=g, prototype=pi, anchor_index=idx)
            out.append(d)
        bundle.reports["surrogate"] = out

    if "counterfactuals" in methods:
        D = None
        if metric.kind != "euclidean":
            D = pairwise_drift_distance(X, model, metric, time_dists)
        out = []
        for g, pi, idx, _ in anchors:
            try:
                cf = nearest_counterfactual(X, regions, idx, D)
                d = cf.to_dict()
                d.update(group=g, prototype=pi)
                out.append(d)
            except NoTargetSamples as exc:
                bundle.errors.append({"method": "counterfactuals", "group": g, "prototype": pi,
                                      "error": "NoTargetSamples", "message": str(exc)})
        bundle.reports["counterfactuals"] = out
    return bundle
