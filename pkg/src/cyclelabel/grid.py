"""Grid search over pipeline variants, ranking by m, and report emission.

The grid spec is a declarative INI file whose ``[grid*]`` sections each
expand to the Cartesian product of their axis lists; the full grid is the
union of the blocks. Per-variant seeds derive from a hash of the canonical
config encoding, so results do not depend on evaluation order or the level
of parallelism.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import csv
import hashlib
import itertools
import logging
from pathlib import Path

import numpy as np

from .errors import ConfigError, CycleLabelError
from .labeling import DEFECT
from .metrics import METRIC_COLUMNS, MetricsRow, correlation_to_m
from .pipeline import PipelineConfig, PipelineInputs, PipelineResult, run_pipeline

log = logging.getLogger("cyclelabel.grid")

_AXIS_KEYS = ("scaler", "reducer", "detector", "subspace", "size", "mode", "weighting")


def parse_grid_spec(text: str) -> list[PipelineConfig]:
    """Expand a grid spec file's blocks into pipeline configs."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    blocks = [s for s in parser.sections() if s == "grid" or s.startswith("grid.")]
    if not blocks:
        raise ConfigError("grid spec has no [grid*] sections")
    configs: list[PipelineConfig] = []
    for section in blocks:
        axes: dict[str, list[str]] = {}
        det_params: dict[str, dict[str, object]] = {}
        for key, value in parser.items(section):
            if "." in key:
                det, param = key.split(".", 1)
                det_params.setdefault(det, {})[param] = _parse_scalar(value)
            elif key in _AXIS_KEYS:
                axes[key] = [v.strip() for v in value.split(",") if v.strip()]
            else:
                raise ConfigError(f"unknown grid key {key!r} in [{section}]")
        configs.extend(_expand_block(axes, det_params))
    return configs


def _parse_scalar(value: str):
    value = value.strip()
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _expand_block(axes: dict[str, list[str]],
                  det_params: dict[str, dict[str, object]]) -> list[PipelineConfig]:
    lists = {
        "scaler": axes.get("scaler", ["standard"]),
        "reducer": axes.get("reducer", ["variance_only"]),
        "detector": axes.get("detector", ["knn"]),
        "subspace": axes.get("subspace", ["1.0"]),
        "mode": axes.get("mode", ["semi_supervised"]),
        "weighting": axes.get("weighting", ["none"]),
    }
    sizes = axes.get("size", [None])
    if len(sizes) != 1:
        raise ConfigError("size must be a single value per block")
    size = int(sizes[0]) if sizes[0] is not None else None
    configs = []
    for scaler, reducer, detector, subspace, mode, weighting in itertools.product(
        lists["scaler"], lists["reducer"], lists["detector"], lists["subspace"],
        lists["mode"], lists["weighting"],
    ):
        params = tuple(sorted(det_params.get(detector, {}).items()))
        fraction = float(subspace)
        configs.append(
            PipelineConfig(
                scaler=scaler, reducer=reducer, detector=detector,
                detector_params=params, subspace_fraction=fraction,
                ensemble_size=size if fraction < 1.0 else None,
                mode=mode, weighting=weighting,
            )
        )
    return configs


# Desk-scale default: 30 variants. Covariance-heavy detectors (mcd, gmm)
# run on reduced features only; the bagged block carries the
# pca + mcd + 70% subspace x 80 winner shape.
DEFAULT_GRID_SPEC = """\
[grid.light]
scaler = standard, robust
reducer = variance_only, pca:minka
detector = knn, lof, hbos, iforest, pca_recon
subspace = 1.0
mode = semi_supervised
weighting = none

[grid.covariance]
scaler = standard, robust
reducer = pca:minka
detector = mcd, gmm
subspace = 1.0
mode = semi_supervised
weighting = none
mcd.n_starts = 100

[grid.bagged]
scaler = standard, robust
reducer = pca:minka
detector = knn, hbos, mcd
subspace = 0.7
size = 80
mode = semi_supervised
weighting = none
mcd.n_starts = 50
"""


_WORKER: dict = {}


def _init_worker(inputs: PipelineInputs, global_seed: int, run_opts: dict) -> None:
    _WORKER["inputs"] = inputs
    _WORKER["seed"] = global_seed
    _WORKER["opts"] = run_opts


def _run_one(config: PipelineConfig) -> PipelineResult:
    return run_pipeline(config, _WORKER["inputs"], _WORKER["seed"], **_WORKER["opts"])


def rank_results(results: list[PipelineResult]) -> list[PipelineResult]:
    """Successes first, by m descending; deterministic tie-break on the id."""
    def key(r: PipelineResult):
        m = r.metrics_row.m if (not r.failed and r.metrics_row) else -np.inf
        return (r.failed, -m, r.variant)

    return sorted(results, key=key)


def grid_search(configs: list[PipelineConfig], inputs: PipelineInputs,
                global_seed: int = 0, jobs: int = 1,
                **run_opts) -> list[PipelineResult]:
    """Evaluate every config and return results ranked by m."""
    if not configs:
        raise ConfigError("grid expanded to zero variants")
    if jobs <= 1:
        _init_worker(inputs, global_seed, run_opts)
        results = [_run_one(c) for c in configs]
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker,
            initargs=(inputs, global_seed, run_opts),
        ) as pool:
            results = list(pool.map(_run_one, configs))
    n_failed = sum(r.failed for r in results)
    if n_failed == len(results):
        reasons = "; ".join(sorted({r.failure_reason for r in results}))
        raise CycleLabelError(f"every grid variant failed: {reasons}")
    if n_failed:
        log.info("grid: %d of %d variants failed", n_failed, len(results))
    return rank_results(results)


# --------------------------------------------------------------------------
# report emission

def _fmt(x: float) -> str:
    # shortest representation that round-trips the float exactly
    return repr(float(x))


def _variant_slug(rank: int, variant: str) -> str:
    digest = hashlib.sha256(variant.encode()).hexdigest()[:8]
    return f"rank{rank:03d}_{digest}"


_REPORT_COLUMNS = METRIC_COLUMNS + ("gt_precision", "gt_recall", "gt_f1")


def write_metrics_csv(rows: list[MetricsRow], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant"] + list(_REPORT_COLUMNS) + ["flags"])
        for r in rows:
            w.writerow([r.variant] + [_fmt(getattr(r, c)) for c in _REPORT_COLUMNS]
                       + [";".join(r.flags)])


def read_metrics_csv(path: Path) -> list[MetricsRow]:
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(MetricsRow(
                variant=rec["variant"],
                flags=tuple(x for x in rec.get("flags", "").split(";") if x),
                **{c: float(rec[c]) for c in _REPORT_COLUMNS},
            ))
    return rows


def summarize(rows: list[MetricsRow]) -> list[tuple[str, dict[str, float]]]:
    """Summary block: best variant, best relative to per-column max, spread
    statistics, and each metric's correlation to m."""
    if not rows:
        raise CycleLabelError("no successful variants to summarize")
    best = rows[0]
    table = {c: np.array([getattr(r, c) for r in rows], dtype=float) for c in METRIC_COLUMNS}
    col_max = {c: np.nanmax(v) for c, v in table.items()}
    relative = {
        c: (getattr(best, c) / col_max[c]) if col_max[c] != 0 else float("nan")
        for c in METRIC_COLUMNS
    }
    summary = [
        ("best", {c: getattr(best, c) for c in METRIC_COLUMNS}),
        ("relative_to_best_of_each", relative),
        ("mean", {c: float(np.nanmean(v)) for c, v in table.items()}),
        ("std", {c: float(np.nanstd(v)) for c, v in table.items()}),
        ("min", {c: float(np.nanmin(v)) for c, v in table.items()}),
        ("q75", {c: float(np.nanpercentile(v, 75)) for c, v in table.items()}),
        ("max", {c: float(np.nanmax(v)) for c, v in table.items()}),
    ]
    if len(rows) >= 3:
        summary.append(("correlation_to_m", correlation_to_m(rows)))
    return summary


def write_summary_csv(rows: list[MetricsRow], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row"] + list(METRIC_COLUMNS))
        for name, vals in summarize(rows):
            w.writerow([name] + [_fmt(vals[c]) for c in METRIC_COLUMNS])


def write_timeline_csv(result: PipelineResult, inputs: PipelineInputs, path: Path) -> None:
    reported = np.zeros(inputs.cycle_ids.size, dtype=int)
    if result.labeled is not None:
        claimed = set(result.labeled.cycle_ids[
            np.array([lab == DEFECT for lab in result.labeled.labels], dtype=bool)
        ].tolist())
        reported[:] = [int(cid in claimed) for cid in inputs.cycle_ids]
    detected = (result.predictions == DEFECT).astype(int) if result.predictions is not None \
        else np.zeros(inputs.cycle_ids.size, dtype=int)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_s", "cycle_id", "normalized_score", "reported", "detected"])
        for i, cid in enumerate(inputs.cycle_ids):
            w.writerow([_fmt(inputs.t_end_ms[i] / 1000.0), cid,
                        _fmt(result.scores.normalized[i]), reported[i], detected[i]])


def render_timeline_png(timeline_csv: Path, png_path: Path, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.genfromtxt(timeline_csv, delimiter=",", names=True)
    fig, ax = plt.subplots(figsize=(11, 4))
    ax.plot(data["t_s"], data["normalized_score"], lw=0.6, color="tab:blue",
            label="anomaly score")
    rep = data["reported"] == 1
    det = data["detected"] == 1
    ax.scatter(data["t_s"][rep], data["normalized_score"][rep], marker="x", s=45,
               color="tab:red", label="reported defect")
    ax.scatter(data["t_s"][det], data["normalized_score"][det], marker="o", s=18,
               facecolors="none", edgecolors="tab:orange", label="detected defect")
    ax.set_xlabel("cycle completion time [s]")
    ax.set_ylabel("normalized anomaly score")
    ax.set_title(title, fontsize=9)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def emit_report(results: list[PipelineResult], inputs: PipelineInputs, out_dir: Path | str,
                top_k: int = 3, render: bool = True) -> dict[str, Path]:
    """Write metrics.csv, summary.csv, failure/runinfo listings, and score
    timelines (CSV + PNG) for the top variants."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ranked = rank_results(results)
    ok = [r for r in ranked if not r.failed and r.metrics_row is not None]
    if not ok:
        raise CycleLabelError("no successful variants to report")

    paths: dict[str, Path] = {}
    paths["metrics"] = out_dir / "metrics.csv"
    write_metrics_csv([r.metrics_row for r in ok], paths["metrics"])
    paths["summary"] = out_dir / "summary.csv"
    write_summary_csv([r.metrics_row for r in ok], paths["summary"])

    with open(out_dir / "failures.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "reason"])
        for r in ranked:
            if r.failed:
                w.writerow([r.variant, r.failure_reason])
    with open(out_dir / "runinfo.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "wall_time_s", "unassignable_reports", "flags"])
        for r in ok:
            w.writerow([r.variant, "%.3f" % r.wall_time_s,
                        r.diagnostics.get("unassignable_reports", ""),
                        ";".join(r.metrics_row.flags)])

    for rank, result in enumerate(ok[:top_k], start=1):
        if result.scores is None:
            continue
        slug = _variant_slug(rank, result.variant)
        tl = out_dir / f"timeline_{slug}.csv"
        write_timeline_csv(result, inputs, tl)
        paths[f"timeline_{rank}"] = tl
        if render:
            png = out_dir / f"timeline_{slug}.png"
            render_timeline_png(tl, png, result.variant)
            paths[f"plot_{rank}"] = png
    return paths
