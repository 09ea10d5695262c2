"""Command line interface: ``driftlens <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial explanation
bundle (at least one explainer failed).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import Dataset, TimeEmbedding, load_csv, write_csv
from .errors import DriftLensError, MismatchedDataset, WrongModelKind
from .evaluation import GridSpec, run_grid
from .explainers import ExplainPlan, explain_drift
from .generators import (fixed_bayes_spec, gen_base, gen_bayes_net, gen_sensor_fault, perturb,
                         random_bayes_spec, shuffle_baseline, two_cluster_swap)
from .localization import LocusReport, localize
from .models import FitConfig, fit_prob_classifier, save_model
from .prototypes import DriftMetricConfig, build_prototypes, pairwise_drift_distance
from .segmentation import Segmentation, segment

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("driftlens")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--deterministic", action="store_true", help="omit timestamps and runtimes")
    p.add_argument("--json-errors", action="store_true", help="print errors as JSON on stderr")
    p.add_argument("--log-level", default="WARNING")


def _fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="forest", choices=("forest", "tree", "linear"))
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--n-trees", type=int, default=100)


def _input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV with a time column")
    p.add_argument("--time-column", "--time-col", dest="time_column", default="t")
    p.add_argument("--standardize", action="store_true")


def _theta(text: str):
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got {text!r}") from None


METRIC_ALIASES = {"geodesic": "drift_geodesic", "drift_geodesic": "drift_geodesic",
                  "euclidean": "euclidean", "forest_kernel": "forest_kernel"}


def _metric(text: str) -> str:
    if text not in METRIC_ALIASES:
        raise argparse.ArgumentTypeError(f"unknown metric {text!r}")
    return METRIC_ALIASES[text]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driftlens", description="Explain concept drift in tabular streams.")
    parser.add_argument("--version", action="version", version=f"driftlens {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="write a synthetic stream and its ground truth")
    _common(g)
    g.add_argument("--kind", required=True,
                   choices=("base", "perturb", "bayes", "sensor", "swap", "shuffle"))
    g.add_argument("--base", default="agrawal")
    g.add_argument("--perturbation", default="shift:5")
    g.add_argument("--n-features", type=int, default=1)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--mode", default="complete", choices=("complete", "shallow"))
    g.add_argument("--topology", default="random", choices=("random", "fixed"))
    g.add_argument("--n-sensors", type=int, default=8)
    g.add_argument("--faults", default="", help="comma list of TIME:SENSOR, e.g. 0.4:3,0.7:5")
    g.add_argument("--input", help="stream to shuffle (kind=shuffle)")
    g.add_argument("--out", required=True)
    g.add_argument("--truth")

    lo = sub.add_parser("localize", help="per-sample drift locus at a change point")
    _common(lo)
    _input_args(lo)
    _fit_args(lo)
    lo.add_argument("--change-point", type=float, default=0.5)
    lo.add_argument("--folds", type=int, default=10)
    lo.add_argument("--theta", type=_theta, default=None, help="'auto' (null-calibrated) or a value")
    lo.add_argument("--n-null", type=int, default=20)
    lo.add_argument("--quantile", type=float, default=0.95)
    lo.add_argument("--out", required=True)
    lo.add_argument("--emit-plot-data")

    se = sub.add_parser("segment", help="drift segmentation with a moment tree")
    _common(se)
    _input_args(se)
    _fit_args(se)
    se.add_argument("--embedding", default="poly:5", help="poly:D, fourier:D[:PERIOD_SAMPLES]")
    se.add_argument("--threshold", type=float)
    se.add_argument("--n-null", type=int, default=20)
    se.add_argument("--quantile", type=float, default=0.95)
    se.add_argument("--out", required=True)
    se.add_argument("--model-out")
    se.add_argument("--emit-plot-data")

    pr = sub.add_parser("prototypes", help="characteristic samples per drift group")
    _common(pr)
    _input_args(pr)
    _fit_args(pr)
    pr.add_argument("--grouping", default="localize",
                    help="localize, segment, or a locus/segmentation JSON report")
    pr.add_argument("--change-point", type=float, default=0.5)
    pr.add_argument("--embedding", default="poly:5")
    pr.add_argument("--k", type=int, default=3)
    pr.add_argument("--metric", default="euclidean", type=_metric,
                    help="euclidean, geodesic (drift_geodesic) or forest_kernel")
    pr.add_argument("--k-neighbors", type=int, default=10)
    pr.add_argument("--lambda", "--lam", dest="lam", type=float, default=1.0)
    pr.add_argument("--out", required=True)
    pr.add_argument("--distance-out", help="write the full drift-aware distance matrix (CSV)")

    ex = sub.add_parser("explain", help="run an explanation plan")
    _common(ex)
    _input_args(ex)
    ex.add_argument("--plan", help="TOML plan file")
    ex.add_argument("--out", required=True)
    ex.add_argument("--emit-plot-data", help="directory for per-report CSV tables")

    ev = sub.add_parser("eval", help="run an experiment grid")
    _common(ev)
    ev.add_argument("--grid", help="TOML grid file")
    ev.add_argument("--out", required=True)
    ev.add_argument("--summary")
    ev.add_argument("--full-scale", action="store_true", help="200 repeats per cell")
    return parser


def _fit_config(a) -> FitConfig:
    return FitConfig(max_depth=a.max_depth, min_leaf=a.min_leaf, n_trees=a.n_trees,
                     seed=a.seed, n_jobs=max(1, a.threads))


def _load(a) -> Dataset:
    return load_csv(a.input, a.time_column, standardize=a.standardize)


def _dump(path, obj, a) -> None:
    if not a.deterministic:
        obj = {**obj, "created": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n",
                          encoding="utf-8")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _echo(a) -> dict:
    skip = ("json_errors", "log_level", "deterministic", "threads", "out", "truth", "summary",
            "emit_plot_data", "model_out", "distance_out")
    return {k: v for k, v in vars(a).items() if k not in skip}


def _parse_faults(text: str):
    times, sensors = [], []
    for part in filter(None, (s.strip() for s in text.split(","))):
        ft, _, s = part.partition(":")
        try:
            times.append(float(ft))
            sensors.append(int(s))
        except ValueError:
            raise UsageError(f"bad fault spec {part!r}; expected TIME:SENSOR") from None
    return times, sensors


def cmd_generate(a) -> int:
    if a.kind == "base":
        ds, truth = gen_base(a.base, a.n, a.seed), None
    elif a.kind == "perturb":
        ls = perturb(gen_base(a.base, a.n, a.seed).standardized(), a.perturbation,
                     a.n_features, a.seed)
        ds, truth = ls.dataset, ls.truth_dict()
    elif a.kind == "bayes":
        spec = fixed_bayes_spec(a.seed, a.mode) if a.topology == "fixed" else \
            random_bayes_spec(a.seed, mode=a.mode)
        ls = gen_bayes_net(spec, a.n, a.seed)
        ds, truth = ls.dataset, ls.truth_dict()
    elif a.kind == "sensor":
        times, sensors = _parse_faults(a.faults)
        ls = gen_sensor_fault(a.n_sensors, a.n, times, sensors, a.seed)
        ds, truth = ls.dataset, ls.truth_dict()
    elif a.kind == "swap":
        ls = two_cluster_swap(a.n, a.seed)
        ds, truth = ls.dataset, ls.truth_dict()
    else:
        if not a.input:
            raise UsageError("--kind shuffle needs --input")
        ds, truth = shuffle_baseline(load_csv(a.input), a.seed), None
    write_csv(ds, a.out)
    if a.truth:
        truth = truth or {"drifting_features": [False] * ds.n_features,
                          "feature_names": list(ds.feature_names), "change_point": None,
                          "provenance": {"base": a.base if a.kind == "base" else "shuffle",
                                         "seed": a.seed}}
        truth["config"] = _echo(a)
        _dump(a.truth, truth, a)
    return EXIT_OK


def cmd_localize(a) -> int:
    ds = _load(a)
    rep = localize(ds, a.change_point, _fit_config(a), a.folds, a.theta, a.model, a.n_null,
                   a.quantile)
    out = rep.to_dict()
    out["config"] = {**out.get("config", {}), "cli": _echo(a)}
    _dump(a.out, out, a)
    if a.emit_plot_data:
        _write_rows(a.emit_plot_data, ("index", "t", "kl", "p_after", "in_locus", "region"),
                    [(i, repr(float(t)), repr(float(k)), repr(float(p)), int(b), r)
                     for i, (t, k, p, b, r) in enumerate(zip(ds.raw_time, rep.kl_scores,
                                                             rep.p_after, rep.in_locus,
                                                             rep.region))])
    return EXIT_OK


def cmd_segment(a) -> int:
    ds = _load(a)
    emb = TimeEmbedding.parse(a.embedding, ds.n_samples)
    seg = segment(ds, emb, _fit_config(a), a.threshold, a.n_null, a.quantile)
    out = seg.to_dict(include_model=True)
    out["config"] = {**out.get("config", {}), "cli": _echo(a)}
    _dump(a.out, out, a)
    if a.model_out:
        save_model(seg.model, a.model_out)
    if a.emit_plot_data:
        bins = len(seg.global_histogram)
        rows = []
        for s, info in sorted(seg.segments.items()):
            for b, c in enumerate(info.time_histogram):
                rows.append((s, b, repr((b + 0.5) / bins), int(c), int(info.drift_flag)))
        _write_rows(a.emit_plot_data, ("segment", "bin", "bin_center", "count", "drift_flag"),
                    rows)
    return EXIT_OK


def _grouping_from_file(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = str(d.get("schema", "")).split("/")[0]
    if kind == "driftlens.locus":
        return LocusReport.from_dict(d)
    if kind == "driftlens.segmentation":
        return Segmentation.from_dict(d)
    raise UsageError(f"{path}: not a locus or segmentation report")


def cmd_prototypes(a) -> int:
    ds = _load(a)
    cfg = _fit_config(a)
    metric = DriftMetricConfig(a.metric, a.k_neighbors, a.lam)
    if a.grouping == "localize":
        grouping = localize(ds, a.change_point, cfg, kind=a.model)
    elif a.grouping == "segment":
        grouping = segment(ds, TimeEmbedding.parse(a.embedding, ds.n_samples), cfg)
    else:
        grouping = _grouping_from_file(a.grouping)
    n_group = len(grouping.p_after) if isinstance(grouping, LocusReport) else grouping.n_samples
    if n_group != ds.n_samples:
        raise MismatchedDataset(f"grouping covers {n_group} samples, data has {ds.n_samples}")
    if isinstance(grouping, LocusReport):
        labels = TimeEmbedding.binary(grouping.change_point)(ds.t)[:, 0]
        model = fit_prob_classifier(ds.X, labels, cfg, a.model) \
            if metric.kind == "forest_kernel" else None
        time_dists = np.column_stack([1 - grouping.p_after, grouping.p_after])
    else:
        model = grouping.model
        h = np.stack([grouping.segments[int(s)].time_histogram for s in grouping.assignments])
        time_dists = h / h.sum(axis=1, keepdims=True)
        if metric.kind == "forest_kernel" and not getattr(model, "is_forest", False):
            raise WrongModelKind("forest_kernel needs a forest; segmentations hold a single tree")
    protos = build_prototypes(ds, grouping, a.k, metric, model, a.seed)
    out = protos.to_dict()
    out["config"] = _echo(a)
    _dump(a.out, out, a)
    if a.distance_out:
        D = pairwise_drift_distance(ds.X, model, metric, time_dists)
        np.savetxt(a.distance_out, D, delimiter=",", fmt="%.17g")
    return EXIT_OK


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None


def load_plan(path, seed: int = 0) -> ExplainPlan:
    """Plan keys live at the top level or under ``[plan]``; fit settings under ``[fit]``.

    ``seed`` is the fallback when the file does not set one.
    """
    d = {"seed": seed}
    if path:
        raw = _read_toml(path)
        fit = raw.pop("fit", {})
        d.update(raw.pop("plan", {}))
        d.update(raw)
        if fit:
            d["fit"] = fit
    try:
        return ExplainPlan.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid plan: {exc}") from None


def load_grid(path, seed: int = 0) -> GridSpec:
    """Grid keys at the top level or under ``[grid]``; fit settings under ``[fit]``."""
    d = {"seed": seed}
    if path:
        raw = _read_toml(path)
        fit = raw.pop("fit", {})
        d.update(raw.pop("grid", {}))
        d.update(raw)
        if fit:
            d["fit"] = fit
    try:
        return GridSpec.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid grid: {exc}") from None


def _emit_bundle_tables(bundle, ds: Dataset, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for key in ("pfi", "ipfi", "model_fi"):
        if key in bundle.reports:
            scores = bundle.reports[key]["scores"]
            _write_rows(outdir / f"importance_{key}.csv", ("feature", "name", "score"),
                        [(j, n, repr(float(v))) for j, (n, v) in
                         enumerate(zip(ds.feature_names, scores))])
    if "prototypes" in bundle.reports:
        rows = []
        for grp in bundle.reports["prototypes"]["groups"]:
            for pi, proto in enumerate(grp["prototypes"]):
                prof = proto["occurrence_profile"]
                for b, c in enumerate(prof):
                    rows.append((grp["group"], pi, b, repr((b + 0.5) / len(prof)), c))
        _write_rows(outdir / "occurrence_profiles.csv",
                    ("group", "prototype", "bin", "bin_center", "count"), rows)
    if "counterfactuals" in bundle.reports:
        _write_rows(outdir / "counterfactuals.csv",
                    ("group", "prototype", "original_index", "counterfactual_index", "distance"),
                    [(c["group"], c["prototype"], c["original_index"],
                      c["counterfactual_index"], repr(c["distance"]))
                     for c in bundle.reports["counterfactuals"]])


def cmd_explain(a) -> int:
    ds = _load(a)
    plan = load_plan(a.plan, a.seed)
    plan.fit = plan.fit.replace(n_jobs=max(1, a.threads))
    bundle = explain_drift(ds, plan)
    out = bundle.to_dict()
    _dump(a.out, out, a)
    if a.emit_plot_data:
        _emit_bundle_tables(bundle, ds, Path(a.emit_plot_data))
    for err in bundle.errors:
        log.warning("explainer %s failed: %s", err["method"], err["message"])
    return EXIT_PARTIAL if bundle.partial else EXIT_OK


def cmd_eval(a) -> int:
    grid = load_grid(a.grid, a.seed)
    if a.full_scale:
        grid.repeats = 200
    run_grid(grid, a.out, a.summary, threads=max(1, a.threads), deterministic=a.deterministic)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "localize": cmd_localize, "segment": cmd_segment,
            "prototypes": cmd_prototypes, "explain": cmd_explain, "eval": cmd_eval}


def _report(exc, code: int, as_json: bool) -> int:
    if as_json:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
              file=sys.stderr)
    else:
        print(f"driftlens: error: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json-errors" in argv
    try:
        a = build_parser().parse_args(argv)
    except UsageError as exc:
        if as_json:
            return _report(exc, EXIT_USAGE, True)
        print(str(exc), file=sys.stderr, end="")
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(a.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except UsageError as exc:
        return _report(exc, EXIT_USAGE, a.json_errors)
    except (DriftLensError, OSError, ValueError) as exc:
        return _report(exc, EXIT_DATA, a.json_errors)


if __name__ == "__main__":
    sys.exit(main())
