"""Drifting Gaussian Bayesian networks with time-dependent nodes."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from graphlib import CycleError, TopologicalSorter

import numpy as np

from ..core import Dataset
from ..errors import CyclicGraph
from .perturb import LabeledStream

HIDDEN = 8
STD_FLOOR = 0.1


@dataclass(frozen=True)
class BayesNetSpec:
    """DAG over named nodes. ``direct`` nodes receive time as an extra input."""

    nodes: tuple
    parents: dict
    direct: frozenset = frozenset()
    seed: int = 0
    mode: str = "complete"  # complete | shallow
    param_seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("complete", "shallow"):
            raise ValueError(f"unknown mode {self.mode!r}")
        missing = [p for ps in self.parents.values() for p in ps if p not in self.nodes]
        missing += [d for d in self.direct if d not in self.nodes]
        if missing:
            raise ValueError(f"unknown nodes referenced: {sorted(set(missing))}")

    def with_mode(self, mode: str) -> "BayesNetSpec":
        return replace(self, mode=mode)

    def parents_of(self, v) -> tuple:
        return tuple(self.parents.get(v, ()))

    def order(self) -> list:
        ts = TopologicalSorter({v: self.parents_of(v) for v in self.nodes})
        try:
            order = list(ts.static_order())
        except CycleError as exc:
            raise CyclicGraph(f"graph has a cycle: {exc.args[1]}") from None
        # earliest-declared ready node first, so RNG consumption is fixed
        pos = {v: i for i, v in enumerate(self.nodes)}
        done, out = set(), []
        while len(out) < len(order):
            for v in sorted(self.nodes, key=pos.get):
                if v not in done and all(p in done for p in self.parents_of(v)):
                    done.add(v)
                    out.append(v)
                    break
        return out

    def drift_classes(self) -> dict:
        """direct, implicit (connected to a direct node ignoring edge direction) or none."""
        adj = {v: set() for v in self.nodes}
        for v in self.nodes:
            for p in self.parents_of(v):
                adj[v].add(p)
                adj[p].add(v)
        reach = set(self.direct)
        stack = list(self.direct)
        while stack:
            for w in adj[stack.pop()]:
                if w not in reach:
                    reach.add(w)
                    stack.append(w)
        return {v: "direct" if v in self.direct else ("implicit" if v in reach else "none")
                for v in self.nodes}

    def shallow_nodes(self) -> tuple:
        """Direct nodes, their parents and non-drifting nodes, in declaration order."""
        cls = self.drift_classes()
        keep = set(self.direct)
        for d in self.direct:
            keep.update(self.parents_of(d))
        keep.update(v for v, c in cls.items() if c == "none")
        return tuple(v for v in self.nodes if v in keep)

    def output_nodes(self) -> tuple:
        return self.nodes if self.mode == "complete" else self.shallow_nodes()

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes),
                "parents": {v: list(self.parents_of(v)) for v in self.nodes},
                "direct": sorted(self.direct), "seed": self.seed, "mode": self.mode}


def fixed_bayes_spec(seed: int = 0, mode: str = "complete") -> BayesNetSpec:
    """Fixed 14-node layout: 2 direct, 2 parents of direct, 7 far drifting, 3 independent."""
    parents = {
        "I1": ("I3",), "I2": ("I3", "I4"), "I3": (), "I4": (),
        "F1": ("I1",), "F2": ("I1", "F1"), "F3": ("I2",), "F4": ("F3",),
        "F5": ("I4", "F4"), "F6": ("F2",), "F7": ("F5",),
        "N1": (), "N2": ("N1",), "N3": ("N1", "N2"),
    }
    nodes = ("I1", "I2", "I3", "I4", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "N1", "N2", "N3")
    return BayesNetSpec(nodes, parents, frozenset({"I1", "I2"}), seed, mode)


def random_bayes_spec(seed: int = 0, n_direct: int = 2, n_parents: int = 2, n_far: int = 7,
                      n_none: int = 3, edge_prob: float = 0.3, mode: str = "complete") -> BayesNetSpec:
    """Seeded random DAG with the given node-class counts.

    Parents of direct nodes are roots; every one of them feeds at least one
    direct node. Far nodes hang below the drifting part and never feed a
    direct node, so they are exactly the nodes removed in shallow mode.
    Independent nodes form their own random sub-DAG.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA7E5]))
    direct = [f"I{i + 1}" for i in range(n_direct)]
    pars = [f"I{n_direct + i + 1}" for i in range(n_parents)]
    far = [f"F{i + 1}" for i in range(n_far)]
    none = [f"N{i + 1}" for i in range(n_none)]
    parents = {v: [] for v in direct + pars + far + none}
    for i, p in enumerate(pars):
        if n_direct:
            parents[direct[i % n_direct]].append(p)
    for d in direct:
        for p in pars:
            if p not in parents[d] and rng.random() < edge_prob:
                parents[d].append(p)
    for i, f in enumerate(far):
        pool = direct + pars + far[:i]
        if not pool:
            continue
        first = pool[int(rng.integers(len(pool)))]
        parents[f].append(first)
        for q in pool:
            if q != first and rng.random() < edge_prob / 2:
                parents[f].append(q)
    for i, v in enumerate(none):
        for q in none[:i]:
            if rng.random() < edge_prob:
                parents[v].append(q)
    nodes = tuple(direct + pars + far + none)
    return BayesNetSpec(nodes, {v: tuple(ps) for v, ps in parents.items()},
                        frozenset(direct), seed, mode)


class _NodeNet:
    """2 x 8 tanh MLP mapping inputs to (mean, std)."""

    def __init__(self, n_in: int, rng: np.random.Generator):
        self.W1 = rng.standard_normal((n_in, HIDDEN))
        self.b1 = rng.standard_normal(HIDDEN)
        self.W2 = rng.standard_normal((HIDDEN, HIDDEN))
        self.b2 = rng.standard_normal(HIDDEN)
        self.W3 = rng.standard_normal((HIDDEN, 2))
        self.b3 = rng.standard_normal(2)

    def __call__(self, Z: np.ndarray):
        h = np.tanh(Z @ self.W1 + self.b1)
        h = np.tanh(h @ self.W2 + self.b2)
        out = h @ self.W3 + self.b3
        return out[:, 0], np.logaddexp(0.0, out[:, 1]) + STD_FLOOR


def sample_bayes_net(spec: BayesNetSpec, n: int, seed: int = 0, t=None) -> dict:
    """Ancestral sampling of every node; returns {node: values}."""
    order = spec.order()
    t = np.linspace(0.0, 1.0, n) if t is None else np.asarray(t, dtype=np.float64)
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9015E]))
    values = {}
    for v in order:
        pseed = spec.param_seeds.get(v, spec.nodes.index(v))
        net_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x9E7, pseed]))
        cols = [values[p] for p in spec.parents_of(v)]
        if v in spec.direct:
            cols.append(t)
        Z = np.column_stack(cols) if cols else np.zeros((n, 0))
        mean, std = _NodeNet(Z.shape[1], net_rng)(Z)
        values[v] = mean + std * noise_rng.standard_normal(n)
    return values


def gen_bayes_net(spec: BayesNetSpec, n: int, seed: int = 0) -> LabeledStream:
    """Stream over the net's output nodes on a uniform time grid.

    In complete mode drifting = direct + implicit nodes; in shallow mode the
    far drifting nodes are marginalized out. ``extra_truth["shallow_truth"]``
    holds direct + parents-of-direct for the alternative scoring.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    values = sample_bayes_net(spec, n, seed, t)
    out = spec.output_nodes()
    cls = spec.drift_classes()
    core = set(spec.direct)
    for d in spec.direct:
        core.update(spec.parents_of(d))
    X = np.column_stack([values[v] for v in out])
    truth = np.array([cls[v] != "none" for v in out])
    shallow = np.array([v in core for v in out])
    ds = Dataset(X, t, tuple(out), meta={"generator": "bayes_net", "seed": seed,
                                          "mode": spec.mode})
    prov = {"base": "bayes_net", "spec": spec.to_dict(), "seed": seed}
    return LabeledStream(ds, truth, None, prov,
                         {"shallow_truth": shallow,
                          "drift_classes": [cls[v] for v in out]})
