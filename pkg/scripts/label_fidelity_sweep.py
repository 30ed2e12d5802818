#!/usr/bin/env python3
"""How reliably does argmax-in-window assignment hit the true defect cycle?

Sweeps report jitter and perturbation amplitude on simulated runs and
prints the fraction of reports whose selected cycle is the true one.
"""

import argparse
import sys
import warnings
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from cyclelabel import detectors
from cyclelabel.cycles import (
    compute_medians, cycles_in_windows, impute_missing, resample_run, segment_cycles,
)
from cyclelabel.features import feature_matrix, fit_scaler, variance_filter
from cyclelabel.labeling import DEFECT, assign_labels
from cyclelabel.simulate import DEFAULT_DEFECTS, DefectSpec, MachineConfig, simulate


def assignment_accuracy(cycles_n, amplitude, jitter_ms, seed):
    config = MachineConfig(horizon=cycles_n, sample_period_ms=4.0)
    defects = [
        DefectSpec(d.class_name, d.relative_frequency, amplitude,
                   d.affected_channels, d.causes_stop)
        for d in DEFAULT_DEFECTS
    ]
    sim = simulate(config, defects, 53 / 2903, seed=seed, jitter_ms=jitter_ms)
    cycles = resample_run(segment_cycles(sim.trace, 0, 10_000.0), 100)
    nominal = [c for c in cycles_in_windows(cycles, sim.nominal_windows) if c.complete]
    cycles = [impute_missing(c, compute_medians(nominal)) for c in cycles]
    matrix = feature_matrix(cycles, sim.trace.kinds)

    ids = np.array([c.cycle_id for c in cycles])
    t0 = np.array([c.t_start_ms for c in cycles])
    t1 = np.array([c.t_end_ms for c in cycles])
    fit_mask = np.zeros(ids.size, dtype=bool)
    for w in sim.nominal_windows:
        fit_mask |= (t0 >= w.t_start_ms) & (t1 <= w.t_end_ms)
    mask = variance_filter(matrix.values[fit_mask])
    values = matrix.values[:, mask]
    values = fit_scaler(values[fit_mask], "robust").apply(values)
    model = detectors.fit_detector("knn", values[fit_mask], seed=0,
                                   mode="semi_supervised")
    scores = detectors.normalize_scores(detectors.score(model, values))
    labeled = assign_labels(scores, ids, t0, t1, sim.reports, sim.nominal_windows)

    true_defects = {t.cycle_id for t in sim.ground_truth if t.is_defect}
    selected = [cid for cid, lab in zip(labeled.cycle_ids, labeled.labels)
                if lab == DEFECT]
    if not selected:
        return float("nan")
    return sum(cid in true_defects for cid in selected) / len(selected)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cycles", type=int, default=1000)
    parser.add_argument("--seeds", type=int, default=3)
    args = parser.parse_args()

    print(f"{'amplitude':>9} {'jitter_s':>9} {'accuracy':>9}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for amplitude in (1.0, 2.0, 4.0, 5.0, 8.0):
            for jitter_s in (0.0, 2.0, 5.0, 10.0):
                accs = [
                    assignment_accuracy(args.cycles, amplitude, jitter_s * 1000.0, seed)
                    for seed in range(args.seeds)
                ]
                print(f"{amplitude:9.1f} {jitter_s:9.1f} {np.nanmean(accs):9.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
