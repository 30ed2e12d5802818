import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cyclelabel import detectors
from cyclelabel.cycles import (
    compute_medians,
    cycles_in_windows,
    impute_missing,
    resample_run,
    segment_cycles,
)
from cyclelabel.features import feature_matrix
from cyclelabel.pipeline import PipelineInputs
from cyclelabel.simulate import DEFAULT_DEFECTS, DefectSpec, MachineConfig, simulate


def scaled_defects(amplitude_sigma: float):
    return [
        DefectSpec(d.class_name, d.relative_frequency, amplitude_sigma,
                   d.affected_channels, d.causes_stop)
        for d in DEFAULT_DEFECTS
    ]


def build_inputs(sim, length: int = 100, timeout_ms: float = 10_000.0) -> PipelineInputs:
    """Segment, normalize, impute, and featurize one simulation."""
    records = segment_cycles(sim.trace, sim.config.trigger_channel, timeout_ms)
    cycles = resample_run(records, length)
    nominal = [c for c in cycles_in_windows(cycles, sim.nominal_windows) if c.complete]
    medians = compute_medians(nominal)
    cycles = [impute_missing(c, medians) for c in cycles]
    matrix = feature_matrix(cycles, sim.trace.kinds)
    truth = {t.cycle_id: t.class_name for t in sim.ground_truth}
    ids = np.array([c.cycle_id for c in cycles])
    t_end = np.array([c.t_end_ms for c in cycles])
    return PipelineInputs(
        features=matrix,
        cycle_ids=ids,
        t_start_ms=np.array([c.t_start_ms for c in cycles]),
        t_end_ms=t_end,
        reports=sim.reports,
        nominal_windows=sim.nominal_windows,
        horizon_ms=float(t_end.max()),
        true_labels=np.array([truth[int(c)] for c in ids]),
    )


@pytest.fixture(scope="session")
def small_sim():
    """120-cycle run with a handful of defects; shared across tests."""
    config = MachineConfig(horizon=120, sample_period_ms=4.0)
    return simulate(config, scaled_defects(5.0), defect_rate=0.05, seed=42)


@pytest.fixture(scope="session")
def small_inputs(small_sim):
    return build_inputs(small_sim)
