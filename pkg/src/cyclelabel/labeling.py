"""Turn anomaly scores plus report windows into a labeled dataset.

Every report claims the cycle with the highest normalized anomaly score
among the cycles completing inside its window (ties broken toward the
earliest cycle; reports processed in time order, and a cycle already
claimed is removed from later candidate sets). Cycles fully inside a
certified defect-free window become nominal; other cycles that sat inside
a report window without being claimed are excluded as ambiguous rather
than polluting the nominal class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .records import DefectReport, Window

DEFECT = "defect"
NOMINAL = "nominal"
ORIGIN_WINDOW = "nominal_window"
ORIGIN_ARGMAX = "argmax_assignment"


@dataclass
class LabeledDataset:
    """Labeled cycles plus the audit trail of exclusions."""

    row_indices: np.ndarray  # positions into the cycle arrays
    cycle_ids: np.ndarray
    labels: list[str]  # NOMINAL / DEFECT
    class_names: list[str]  # reported class for defect rows, NOMINAL otherwise
    origins: list[str]
    excluded_cycle_ids: np.ndarray  # in-window candidates that were not claimed
    unassignable: list[DefectReport] = field(default_factory=list)

    def __post_init__(self) -> None:
        ids = set(self.cycle_ids.tolist())
        if len(ids) != len(self.cycle_ids):
            raise DataError("a cycle was labeled twice")
        if ids & set(self.excluded_cycle_ids.tolist()):
            raise DataError("excluded and labeled cycles overlap")

    @property
    def n_defects(self) -> int:
        return sum(1 for lab in self.labels if lab == DEFECT)

    def label_array(self) -> np.ndarray:
        return np.array(self.labels)


def assign_labels(scores: np.ndarray, cycle_ids: np.ndarray, cycle_t_start: np.ndarray,
                  cycle_t_end: np.ndarray, reports: list[DefectReport],
                  nominal_windows: list[Window]) -> LabeledDataset:
    """Build the labeled dataset from scores, reports, and nominal windows.

    A cycle is a candidate for a report when its completion time lies in
    the report window; it counts as nominal when it lies entirely inside a
    nominal window.
    """
    scores = np.asarray(scores, dtype=float)
    cycle_ids = np.asarray(cycle_ids)
    t_start = np.asarray(cycle_t_start, dtype=float)
    t_end = np.asarray(cycle_t_end, dtype=float)
    n = scores.size
    if not (cycle_ids.size == t_start.size == t_end.size == n):
        raise DataError("scores and cycle arrays disagree in length")

    order = np.argsort(t_end, kind="stable")
    claimed = np.zeros(n, dtype=bool)
    in_any_window = np.zeros(n, dtype=bool)
    defect_rows: list[tuple[int, str]] = []
    unassignable: list[DefectReport] = []

    for report in sorted(reports, key=lambda r: (r.t_start_ms, r.t_end_ms, r.class_name)):
        lo = np.searchsorted(t_end[order], report.t_start_ms, side="left")
        hi = np.searchsorted(t_end[order], report.t_end_ms, side="right")
        candidates = order[lo:hi]  # in completion-time order
        in_any_window[candidates] = True
        candidates = candidates[~claimed[candidates]]
        if candidates.size == 0:
            unassignable.append(report)
            continue
        pick = candidates[int(np.argmax(scores[candidates]))]  # first max = earliest
        claimed[pick] = True
        defect_rows.append((int(pick), report.class_name))

    nominal_mask = np.zeros(n, dtype=bool)
    for w in nominal_windows:
        nominal_mask |= (t_start >= w.t_start_ms) & (t_end <= w.t_end_ms)
    nominal_mask &= ~claimed

    rows: list[int] = []
    labels: list[str] = []
    class_names: list[str] = []
    origins: list[str] = []
    for idx, cls in defect_rows:
        rows.append(idx)
        labels.append(DEFECT)
        class_names.append(cls)
        origins.append(ORIGIN_ARGMAX)
    for idx in np.flatnonzero(nominal_mask):
        rows.append(int(idx))
        labels.append(NOMINAL)
        class_names.append(NOMINAL)
        origins.append(ORIGIN_WINDOW)

    excluded = in_any_window & ~claimed & ~nominal_mask
    row_indices = np.array(rows, dtype=int)
    return LabeledDataset(
        row_indices=row_indices,
        cycle_ids=cycle_ids[row_indices] if rows else np.array([], dtype=cycle_ids.dtype),
        labels=labels,
        class_names=class_names,
        origins=origins,
        excluded_cycle_ids=cycle_ids[excluded],
        unassignable=unassignable,
    )
