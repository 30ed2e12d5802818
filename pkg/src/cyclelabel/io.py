"""Plain-text artifact formats: columnar CSV, JSON-lines, run manifests.

Everything round-trips through text so runs stay auditable; floats are
written with enough digits to reproduce the binary values exactly.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .cycles import NormalizedCycle
from .errors import DataError
from .features import FeatureMatrix
from .records import DefectReport, Window
from .simulate import CycleTruth, RawTrace

FLOAT_FMT = "%.17g"


def fmt(x: float) -> str:
    return FLOAT_FMT % x


def sha256_of_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require(path: Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input file: {path}")
    return path


# --------------------------------------------------------------------------
# trace

def write_trace_csv(trace: RawTrace, path: Path | str) -> None:
    header = "t_ms," + ",".join(trace.channel_names)
    data = np.column_stack([trace.t_ms, trace.values])
    np.savetxt(path, data, fmt="%.12g", delimiter=",", header=header, comments="")


def read_trace_csv(path: Path | str, kinds: list[str]) -> RawTrace:
    path = _require(Path(path))
    with open(path) as f:
        names = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(names):
        raise DataError(f"malformed trace: {path}")
    return RawTrace(data[:, 0], data[:, 1:], names[1:], list(kinds))


def write_taxonomy(kinds: list[str], path: Path | str) -> None:
    Path(path).write_text(json.dumps({"kinds": list(kinds)}, indent=1))


def read_taxonomy(path: Path | str) -> list[str]:
    return json.loads(_require(Path(path)).read_text())["kinds"]


# --------------------------------------------------------------------------
# JSON-lines records

def write_jsonl(rows: list[dict], path: Path | str) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def read_jsonl(path: Path | str) -> list[dict]:
    rows = []
    with open(_require(Path(path))) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_ground_truth(truths: list[CycleTruth], path: Path | str) -> None:
    write_jsonl(
        [
            {
                "cycle_id": t.cycle_id,
                "t_start_ms": t.t_start_ms,
                "t_end_ms": t.t_end_ms,
                "class": t.class_name,
                "machine_detected": t.machine_detected,
            }
            for t in truths
        ],
        path,
    )


def read_ground_truth(path: Path | str) -> list[CycleTruth]:
    return [
        CycleTruth(r["cycle_id"], r["t_start_ms"], r["t_end_ms"], r["class"],
                   r.get("machine_detected", False))
        for r in read_jsonl(path)
    ]


def write_reports(reports: list[DefectReport], path: Path | str) -> None:
    write_jsonl(
        [
            {"t_start_ms": r.t_start_ms, "t_end_ms": r.t_end_ms,
             "class": r.class_name, "source": r.source}
            for r in reports
        ],
        path,
    )


def read_reports(path: Path | str) -> list[DefectReport]:
    return [
        DefectReport(r["t_start_ms"], r["t_end_ms"], r["class"], r.get("source", "operator"))
        for r in read_jsonl(path)
    ]


def write_windows(windows: list[Window], path: Path | str) -> None:
    write_jsonl([{"t_start_ms": w.t_start_ms, "t_end_ms": w.t_end_ms} for w in windows], path)


def read_windows(path: Path | str) -> list[Window]:
    return [Window(r["t_start_ms"], r["t_end_ms"]) for r in read_jsonl(path)]


# --------------------------------------------------------------------------
# normalized cycles

def write_cycles_csv(cycles: list[NormalizedCycle], path: Path | str) -> None:
    if not cycles:
        raise DataError("no cycles to write")
    length = cycles[0].length
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cycle_id", "channel"] + [f"p{i}" for i in range(length)])
        for c in cycles:
            for ch in range(c.values.shape[1]):
                w.writerow([c.cycle_id, ch] + [fmt(v) for v in c.values[:, ch]])


def write_cycle_index(cycles: list[NormalizedCycle], path: Path | str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cycle_id", "t_start_ms", "t_end_ms", "complete", "n_missing"])
        for c in cycles:
            w.writerow([c.cycle_id, fmt(c.t_start_ms), fmt(c.t_end_ms),
                        int(c.complete), int(c.missing.sum())])


def read_cycles_csv(cycles_path: Path | str, index_path: Path | str) -> list[NormalizedCycle]:
    index = {}
    with open(_require(Path(index_path)), newline="") as f:
        for row in csv.DictReader(f):
            index[int(row["cycle_id"])] = (
                float(row["t_start_ms"]), float(row["t_end_ms"]), bool(int(row["complete"]))
            )
    per_cycle: dict[int, dict[int, np.ndarray]] = {}
    with open(_require(Path(cycles_path)), newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        length = len(header) - 2
        for row in reader:
            cid, ch = int(row[0]), int(row[1])
            per_cycle.setdefault(cid, {})[ch] = np.array(row[2:], dtype=float)
    cycles = []
    for cid in sorted(per_cycle):
        chans = per_cycle[cid]
        values = np.column_stack([chans[ch] for ch in sorted(chans)])
        t0, t1, complete = index[cid]
        cycles.append(NormalizedCycle(cid, values, np.zeros(values.shape, dtype=bool),
                                      t0, t1, complete))
        if values.shape[0] != length:
            raise DataError(f"cycle {cid} has wrong length")
    return cycles


# --------------------------------------------------------------------------
# features / scores / labels

def write_features_csv(matrix: FeatureMatrix, cycle_ids: np.ndarray, path: Path | str,
                       lineage_path: Path | str | None = None) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cycle_id"] + matrix.names)
        for cid, row in zip(cycle_ids, matrix.values):
            w.writerow([cid] + [fmt(v) for v in row])
    if lineage_path is not None:
        Path(lineage_path).write_text(json.dumps(matrix.lineage, indent=1))


def read_features_csv(path: Path | str) -> tuple[FeatureMatrix, np.ndarray]:
    with open(_require(Path(path)), newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        names = header[1:]
        ids, rows = [], []
        for row in reader:
            ids.append(int(row[0]))
            rows.append(np.array(row[1:], dtype=float))
    return FeatureMatrix(np.vstack(rows), names), np.array(ids)


def write_scores_csv(cycle_ids: np.ndarray, raw: np.ndarray, normalized: np.ndarray,
                     path: Path | str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cycle_id", "raw", "normalized"])
        for cid, r, n in zip(cycle_ids, raw, normalized):
            w.writerow([cid, fmt(r), fmt(n)])


def read_scores_csv(path: Path | str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ids, raw, norm = [], [], []
    with open(_require(Path(path)), newline="") as f:
        for row in csv.DictReader(f):
            ids.append(int(row["cycle_id"]))
            raw.append(float(row["raw"]))
            norm.append(float(row["normalized"]))
    return np.array(ids), np.array(raw), np.array(norm)


def write_labels_csv(labeled, path: Path | str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cycle_id", "label", "class", "origin"])
        for cid, label, cls, origin in zip(labeled.cycle_ids, labeled.labels,
                                           labeled.class_names, labeled.origins):
            w.writerow([cid, label, cls, origin])
        for cid in labeled.excluded_cycle_ids:
            w.writerow([cid, "excluded", "", "report_window"])


def read_labels_csv(path: Path | str) -> list[dict]:
    with open(_require(Path(path)), newline="") as f:
        return [dict(row) for row in csv.DictReader(f)]


# --------------------------------------------------------------------------
# manifest

def write_manifest(out_dir: Path | str, stage: str, seed: int | None,
                   config: dict, input_paths: list[Path | str]) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "tool_version": __version__,
        "stage": stage,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": seed,
        "config": config,
        "input_digests": {
            str(p): sha256_of_file(p) for p in input_paths if Path(p).exists()
        },
    }
    path = out_dir / f"manifest_{stage}.json"
    path.write_text(json.dumps(manifest, indent=1, default=str))
    return path
