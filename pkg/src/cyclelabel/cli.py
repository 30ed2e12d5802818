"""Command-line surface: simulate -> segment -> featurize -> score -> label
-> train -> evaluate, plus grid search over pipeline variants and a
run-everything command. Every artifact-producing stage writes a manifest
with input digests, the seed, and the stage configuration.

Exit codes: 0 success, 1 data error, 2 configuration/usage error.
Set CYCLELABEL_LOG=debug|info|warning for logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, detectors, io
from .cycles import compute_medians, cycles_in_windows, impute_missing, resample_run, segment_cycles
from .errors import ConfigError, CycleLabelError, DataError
from .features import feature_matrix, fit_scaler, variance_filter
from .forest import RandomForestModel, predict, train_random_forest
from .grid import DEFAULT_GRID_SPEC, emit_report, grid_search, parse_grid_spec, read_metrics_csv, write_summary_csv
from .labeling import DEFECT, NOMINAL, assign_labels
from .metrics import MetricsRow, chi2_uniformity, cross_validate, ground_truth_eval, relative_score, score_variance
from .pipeline import PipelineInputs
from .reduction import fit_factor_analysis, fit_pca
from .simulate import DEFAULT_DEFECTS, DefectSpec, MachineConfig, emit_reports, simulate

log = logging.getLogger("cyclelabel")


def _setup_logging() -> None:
    level = os.environ.get("CYCLELABEL_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_sim_config(args) -> tuple[MachineConfig, list[DefectSpec], dict]:
    overrides: dict = {}
    defects = list(DEFAULT_DEFECTS)
    extra = {"defect_rate": None, "jitter_ms": 5000.0, "miss_rate": 0.0}
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text())
        overrides.update(raw.get("machine", {}))
        if "defects" in raw:
            defects = [DefectSpec(**d) for d in raw["defects"]]
        for key in extra:
            if key in raw:
                extra[key] = raw[key]
    if args.cycles is not None:
        overrides["horizon"] = args.cycles
    if args.sample_period_ms is not None:
        overrides["sample_period_ms"] = args.sample_period_ms
    if args.rate is not None:
        overrides["nominal_rate"] = args.rate
    if args.sensors is not None:
        overrides["n_sensors"] = args.sensors
    config = MachineConfig(**overrides)

    if args.amplitude_sigma is not None:
        defects = [DefectSpec(d.class_name, d.relative_frequency, args.amplitude_sigma,
                              d.affected_channels, d.causes_stop) for d in defects]
    if args.defect_rate is not None:
        extra["defect_rate"] = args.defect_rate
    if args.defects is not None:
        extra["defect_rate"] = args.defects / config.horizon
    if extra["defect_rate"] is None:
        extra["defect_rate"] = 53 / 2903  # skewed census default
    if args.jitter_ms is not None:
        extra["jitter_ms"] = args.jitter_ms
    if args.miss_rate is not None:
        extra["miss_rate"] = args.miss_rate
    return config, defects, extra


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    config, defects, extra = _load_sim_config(args)
    sim = simulate(config, defects, extra["defect_rate"], seed=args.seed,
                   jitter_ms=extra["jitter_ms"], miss_rate=extra["miss_rate"])
    io.write_trace_csv(sim.trace, out / "trace.csv")
    io.write_taxonomy(sim.trace.kinds, out / "taxonomy.json")
    io.write_ground_truth(sim.ground_truth, out / "ground_truth.jsonl")
    io.write_reports(sim.reports, out / "reports.jsonl")
    io.write_windows(sim.nominal_windows, out / "nominal_windows.jsonl")
    io.write_manifest(out, "simulate", args.seed,
                      {"machine": vars(args), "defect_rate": extra["defect_rate"]},
                      [])
    n_defects = sum(1 for t in sim.ground_truth if t.is_defect)
    log.info("simulated %d cycles with %d defects", config.horizon, n_defects)
    print(f"simulate: {config.horizon} cycles, {n_defects} defects -> {out}")
    return 0


def cmd_segment(args) -> int:
    src = Path(args.indir)
    out = _out_dir(args) if args.out else src
    kinds = io.read_taxonomy(src / "taxonomy.json")
    trace = io.read_trace_csv(src / "trace.csv", kinds)
    records = segment_cycles(trace, trigger_channel=args.trigger, timeout_ms=args.timeout_ms)
    if not records:
        raise DataError("no trigger events found in trace")
    cycles = resample_run(records, length=args.length)
    windows = io.read_windows(src / "nominal_windows.jsonl")
    nominal = [c for c in cycles_in_windows(cycles, windows) if c.complete]
    medians = compute_medians(nominal)
    cycles = [impute_missing(c, medians) for c in cycles]
    io.write_cycles_csv(cycles, out / "cycles.csv")
    io.write_cycle_index(cycles, out / "cycle_index.csv")
    io.write_manifest(out, "segment", None,
                      {"L": args.length, "timeout_ms": args.timeout_ms, "trigger": args.trigger},
                      [src / "trace.csv", src / "nominal_windows.jsonl"])
    incomplete = sum(1 for c in cycles if not c.complete)
    print(f"segment: {len(cycles)} cycles ({incomplete} closed by timeout) -> {out}")
    return 0


def cmd_featurize(args) -> int:
    src = Path(args.indir)
    out = _out_dir(args) if args.out else src
    kinds = io.read_taxonomy(src / "taxonomy.json")
    cycles = io.read_cycles_csv(src / "cycles.csv", src / "cycle_index.csv")
    matrix = feature_matrix(cycles, kinds)
    ids = np.array([c.cycle_id for c in cycles])
    io.write_features_csv(matrix, ids, out / "features.csv", out / "features.lineage.json")

    if args.scaler != "none" or args.reduce != "none":
        if args.fit_on == "nominal":
            windows = io.read_windows(src / "nominal_windows.jsonl")
            nominal_ids = {c.cycle_id for c in cycles_in_windows(cycles, windows)}
            fit_rows = np.array([c in nominal_ids for c in ids])
        else:
            fit_rows = np.ones(ids.size, dtype=bool)
        values = matrix.values
        proc = matrix
        if args.reduce != "none":
            mask = variance_filter(values[fit_rows])
            proc = proc.select(mask, {"step": "variance_filter", "kept": int(mask.sum())})
        scaler = fit_scaler(proc.values[fit_rows], args.scaler)
        proc = proc.with_values(scaler.apply(proc.values), proc.names,
                                {"step": "scaler", "kind": args.scaler})
        if args.reduce.startswith("pca"):
            arg = args.reduce.partition(":")[2] or "minka"
            model = fit_pca(proc.values[fit_rows], "minka" if arg == "minka" else int(arg))
            proc = proc.with_values(model.transform(proc.values),
                                    [f"pc{i}" for i in range(model.k)],
                                    {"step": "pca", "k": model.k})
        elif args.reduce.startswith("fa"):
            k = int(args.reduce.partition(":")[2])
            model = fit_factor_analysis(proc.values[fit_rows], k)
            proc = proc.with_values(model.transform(proc.values),
                                    [f"factor{i}" for i in range(k)],
                                    {"step": "fa", "k": k})
        io.write_features_csv(proc, ids, out / "features_proc.csv",
                              out / "features_proc.lineage.json")
    io.write_manifest(out, "featurize", None,
                      {"scaler": args.scaler, "reduce": args.reduce, "fit_on": args.fit_on},
                      [src / "cycles.csv"])
    print(f"featurize: {matrix.values.shape[0]} cycles x {matrix.n_features} features -> {out}")
    return 0


def _features_for_stage(src: Path):
    proc = src / "features_proc.csv"
    path = proc if proc.exists() else src / "features.csv"
    matrix, ids = io.read_features_csv(path)
    return matrix, ids, path


def _cycle_index(src: Path):
    rows = []
    import csv as _csv

    with open(io._require(src / "cycle_index.csv"), newline="") as f:
        for row in _csv.DictReader(f):
            rows.append((int(row["cycle_id"]), float(row["t_start_ms"]),
                         float(row["t_end_ms"]), bool(int(row["complete"]))))
    rows.sort()
    ids = np.array([r[0] for r in rows])
    t0 = np.array([r[1] for r in rows])
    t1 = np.array([r[2] for r in rows])
    complete = np.array([r[3] for r in rows])
    return ids, t0, t1, complete


def _parse_params(text: str | None) -> dict:
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        if not _:
            raise ConfigError(f"malformed detector parameter {part!r}")
        try:
            out[key.strip()] = int(value)
        except ValueError:
            try:
                out[key.strip()] = float(value)
            except ValueError:
                out[key.strip()] = value.strip()
    return out


def cmd_score(args) -> int:
    src = Path(args.indir)
    out = _out_dir(args) if args.out else src
    matrix, ids, feat_path = _features_for_stage(src)
    cid, t0, t1, _ = _cycle_index(src)
    if not np.array_equal(cid, ids):
        raise DataError("cycle index and feature rows disagree")
    if args.mode == "semi_supervised":
        windows = io.read_windows(src / "nominal_windows.jsonl")
        fit_mask = np.zeros(ids.size, dtype=bool)
        for w in windows:
            fit_mask |= (t0 >= w.t_start_ms) & (t1 <= w.t_end_ms)
    else:
        fit_mask = np.ones(ids.size, dtype=bool)
    params = _parse_params(args.params)
    if args.subspace >= 1.0 and (args.size or 1) == 1:
        model = detectors.fit_detector(args.detector, matrix.values[fit_mask], params,
                                       seed=args.seed, mode=args.mode)
        raw = detectors.score(model, matrix.values)
    else:
        ensemble = detectors.fit_subspace_ensemble(
            args.detector, matrix.values[fit_mask], args.subspace, args.size,
            seed=args.seed, mode=args.mode, params=params)
        raw = detectors.score_ensemble(ensemble, matrix.values)
    scores = detectors.AnomalyScores.from_raw(raw, args.detector)
    io.write_scores_csv(ids, scores.raw, scores.normalized, out / "scores.csv")
    io.write_manifest(out, "score", args.seed,
                      {"detector": args.detector, "mode": args.mode,
                       "subspace": args.subspace, "size": args.size, "params": params},
                      [feat_path])
    print(f"score: {args.detector} ({args.mode}) over {ids.size} cycles -> {out}")
    return 0


def cmd_label(args) -> int:
    src = Path(args.indir)
    out = _out_dir(args) if args.out else src
    scores_path = Path(args.scores) if args.scores else src / "scores.csv"
    reports_path = Path(args.reports) if args.reports else src / "reports.jsonl"
    ids, _, normalized = io.read_scores_csv(scores_path)
    cid, t0, t1, _ = _cycle_index(src)
    if not np.array_equal(cid, ids):
        raise DataError("cycle index and score rows disagree")
    reports = io.read_reports(reports_path)
    windows = io.read_windows(src / "nominal_windows.jsonl")
    labeled = assign_labels(normalized, ids, t0, t1, reports, windows)
    io.write_labels_csv(labeled, out / "labels.csv")
    io.write_manifest(out, "label", None, {"n_reports": len(reports)},
                      [scores_path, reports_path])
    print(f"label: {labeled.n_defects} defect rows, "
          f"{len(labeled.labels) - labeled.n_defects} nominal rows, "
          f"{len(labeled.unassignable)} unassignable reports -> {out}")
    return 0


def _labeled_matrix(src: Path):
    matrix, ids, _ = _features_for_stage(src)
    rows = io.read_labels_csv(src / "labels.csv")
    id_to_row = {int(cid): i for i, cid in enumerate(ids)}
    idx, labels = [], []
    for row in rows:
        if row["label"] in (NOMINAL, DEFECT):
            idx.append(id_to_row[int(row["cycle_id"])])
            labels.append(row["label"])
    return matrix, ids, np.array(idx, dtype=int), np.array(labels)


def cmd_train(args) -> int:
    src = Path(args.indir)
    out = _out_dir(args) if args.out else src
    matrix, _, idx, labels = _labeled_matrix(src)
    model = train_random_forest(matrix.values[idx], labels, weighting=args.weighting,
                                seed=args.seed)
    (out / "model.json").write_text(model.to_json())
    io.write_manifest(out, "train", args.seed, {"weighting": args.weighting},
                      [src / "labels.csv"])
    oob = "n/a" if model.oob_accuracy is None else f"{model.oob_accuracy:.3f}"
    print(f"train: forest of {len(model.trees)} trees (oob accuracy {oob}) -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    src = Path(args.indir)
    out = _out_dir(args) if args.out else src
    matrix, ids, idx, labels = _labeled_matrix(src)
    _, _, normalized = io.read_scores_csv(src / "scores.csv")
    cid, t0, t1, _ = _cycle_index(src)
    model = RandomForestModel.from_json(io._require(src / "model.json").read_text())
    predictions = predict(model, matrix.values)[0]
    detected = np.flatnonzero(predictions == DEFECT)
    flags = []
    if detected.size:
        m_value = relative_score(normalized, detected)
    else:
        m_value, flags = 0.0, ["no_detected_defects"]
    cv = cross_validate(matrix.values[idx], labels, seed=args.seed,
                        rf_params={"weighting": model.weighting})
    row = MetricsRow(
        variant="cli_single_pipeline",
        m=m_value,
        score_variance=score_variance(normalized),
        chi2_stat=chi2_uniformity(t1[detected], float(t1.max()), args.chi2_bins),
        f1_defect=cv["f1_defect"], precision_defect=cv["precision_defect"],
        recall_defect=cv["recall_defect"], f1_macro=cv["f1_macro"],
        precision_macro=cv["precision_macro"], recall_macro=cv["recall_macro"],
        flags=tuple(flags + cv.get("flags", [])),
    )
    gt_path = src / "ground_truth.jsonl"
    if gt_path.exists():
        truth = {t.cycle_id: t.class_name for t in io.read_ground_truth(gt_path)}
        true_labels = np.array([truth.get(int(c), NOMINAL) for c in ids])
        gt = ground_truth_eval(predictions, true_labels)
        from dataclasses import replace as _replace

        row = _replace(row, gt_precision=gt["gt_precision"], gt_recall=gt["gt_recall"],
                       gt_f1=gt["gt_f1"])
    from .grid import write_metrics_csv

    write_metrics_csv([row], out / "metrics.csv")
    io.write_manifest(out, "evaluate", args.seed, {"chi2_bins": args.chi2_bins},
                      [src / "model.json", src / "scores.csv"])
    print(f"evaluate: m={row.m:.4g} f1_defect={row.f1_defect:.3f} -> {out / 'metrics.csv'}")
    return 0


def _build_inputs(src: Path) -> PipelineInputs:
    matrix, ids = io.read_features_csv(src / "features.csv")
    cid, t0, t1, _ = _cycle_index(src)
    if not np.array_equal(cid, ids):
        raise DataError("cycle index and feature rows disagree")
    reports = io.read_reports(src / "reports.jsonl")
    windows = io.read_windows(src / "nominal_windows.jsonl")
    true_labels = None
    gt_path = src / "ground_truth.jsonl"
    if gt_path.exists():
        truth = {t.cycle_id: t.class_name for t in io.read_ground_truth(gt_path)}
        true_labels = np.array([truth.get(int(c), NOMINAL) for c in ids])
    return PipelineInputs(
        features=matrix, cycle_ids=ids, t_start_ms=t0, t_end_ms=t1,
        reports=reports, nominal_windows=windows, horizon_ms=float(t1.max()),
        true_labels=true_labels,
    )


def cmd_grid(args) -> int:
    src = Path(args.data)
    out = _out_dir(args)
    spec_text = Path(args.spec).read_text() if args.spec else DEFAULT_GRID_SPEC
    configs = parse_grid_spec(spec_text)
    inputs = _build_inputs(src)
    results = grid_search(configs, inputs, global_seed=args.seed, jobs=args.jobs)
    emit_report(results, inputs, out, top_k=args.top, render=not args.no_plots)
    io.write_manifest(out, "grid", args.seed,
                      {"spec": args.spec or "builtin", "variants": len(configs),
                       "jobs": args.jobs},
                      [src / "features.csv", src / "reports.jsonl"])
    best = next(r for r in results if not r.failed)
    print(f"grid: {len(configs)} variants, best m={best.metrics_row.m:.4g} "
          f"({best.variant}) -> {out}")
    return 0


def cmd_report(args) -> int:
    src = Path(args.indir)
    rows = read_metrics_csv(io._require(src / "metrics.csv"))
    write_summary_csv(rows, src / "summary.csv")
    print(f"report: summary over {len(rows)} variants -> {src / 'summary.csv'}")
    return 0


def cmd_all(args) -> int:
    out = _out_dir(args)
    args.out = str(out)
    # desk-scale defaults: the full-rate, full-horizon settings stay available
    # through the explicit flags
    if args.cycles is None and not args.config:
        args.cycles = 400
    if args.sample_period_ms is None and not args.config:
        args.sample_period_ms = 4.0
    cmd_simulate(args)
    ns = argparse.Namespace(indir=str(out), out=None, trigger=0,
                            timeout_ms=args.timeout_ms, length=args.length)
    cmd_segment(ns)
    ns = argparse.Namespace(indir=str(out), out=None, scaler="none", reduce="none",
                            fit_on="all")
    cmd_featurize(ns)
    ns = argparse.Namespace(data=str(out), out=str(out), spec=args.grid_spec,
                            seed=args.seed, jobs=args.jobs, top=args.top,
                            no_plots=args.no_plots)
    cmd_grid(ns)
    print(f"all: artifacts in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclelabel",
        description="Weak labeling of machine cycles via anomaly scoring.",
    )
    parser.add_argument("--version", action="version", version=f"cyclelabel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_sim_args(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--cycles", type=int, default=None, help="cycles to produce")
        p.add_argument("--defects", type=int, default=None, help="exact defect count")
        p.add_argument("--defect-rate", dest="defect_rate", type=float, default=None)
        p.add_argument("--rate", type=float, default=None, help="products per minute")
        p.add_argument("--sensors", type=int, default=None)
        p.add_argument("--sample-period-ms", dest="sample_period_ms", type=float, default=None)
        p.add_argument("--amplitude-sigma", dest="amplitude_sigma", type=float, default=None)
        p.add_argument("--jitter-ms", dest="jitter_ms", type=float, default=None)
        p.add_argument("--miss-rate", dest="miss_rate", type=float, default=None)

    p = sub.add_parser("simulate", help="generate a synthetic run")
    add_sim_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("segment", help="cut the trace into normalized cycles")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--L", dest="length", type=int, default=200)
    p.add_argument("--timeout-ms", dest="timeout_ms", type=float, default=10_000.0)
    p.add_argument("--trigger", type=int, default=0)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("featurize", help="extract per-cycle features")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--scaler", default="none",
                   choices=["none", "standard", "minmax", "robust"])
    p.add_argument("--reduce", default="none",
                   help="none | pca:minka | pca:<k> | fa:<k>")
    p.add_argument("--fit-on", dest="fit_on", default="all", choices=["all", "nominal"])
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("score", help="fit a detector and score every cycle")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--detector", default="knn", choices=list(detectors.DETECTOR_KINDS))
    p.add_argument("--mode", default="semi_supervised", choices=list(detectors.MODES))
    p.add_argument("--subspace", type=float, default=1.0)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--params", default=None, help="detector params, e.g. k=7,n_starts=100")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("label", help="assign report windows to argmax-score cycles")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--scores", default=None)
    p.add_argument("--reports", default=None)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train the forest on the labeled dataset")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--weighting", default="none", choices=["none", "balanced"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metric row for the staged single pipeline")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chi2-bins", dest="chi2_bins", type=int, default=20)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="run a grid of pipeline variants")
    p.add_argument("--spec", default=None, help="grid spec file (INI); builtin if omitted")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--top", type=int, default=3, help="timelines for the top K variants")
    p.add_argument("--no-plots", dest="no_plots", action="store_true")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="recompute summary.csv from metrics.csv")
    p.add_argument("--in", dest="indir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("all", help="simulate, segment, featurize, grid, report")
    add_sim_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--L", dest="length", type=int, default=200)
    p.add_argument("--timeout-ms", dest="timeout_ms", type=float, default=10_000.0)
    p.add_argument("--grid-spec", dest="grid_spec", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--top", type=int, default=3)
    p.add_argument("--no-plots", dest="no_plots", action="store_true")
    p.set_defaults(func=cmd_all)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CycleLabelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
