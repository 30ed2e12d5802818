"""Per-product cycle records: segmentation, length normalization, imputation.

The raw trace is cut at rising edges of a trigger channel into one record
per product. A record whose next trigger does not arrive within a timeout
is closed early (machine stop); its frozen tail samples are dropped so only
real motion remains. Records are then resampled to a fixed length so cycles
produced at different machine speeds become comparable, and gaps left by
early-closed records are filled from a per-position median table built on
known-good cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .records import Window
from .simulate import RawTrace


@dataclass
class CycleRecord:
    """One product's slice of the raw trace."""

    cycle_id: int
    t_start_ms: float
    t_end_ms: float  # next trigger, timeout close, or end of data
    t_ms: np.ndarray
    values: np.ndarray  # (n_samples, n_channels)
    complete: bool

    def __post_init__(self) -> None:
        if not self.t_start_ms < self.t_end_ms:
            raise DataError(f"cycle {self.cycle_id}: t_start must precede t_end")


@dataclass
class NormalizedCycle:
    """A cycle resampled to a fixed number of positions per channel."""

    cycle_id: int
    values: np.ndarray  # (L, n_channels)
    missing: np.ndarray  # (L, n_channels) bool, True where no data backed the position
    t_start_ms: float
    t_end_ms: float
    complete: bool

    @property
    def length(self) -> int:
        return self.values.shape[0]


@dataclass
class MedianTable:
    """Per (position, channel) medians from complete nominal cycles."""

    values: np.ndarray  # (L, n_channels)

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise DataError("median table contains non-finite values")


def _rising_edges(trigger: np.ndarray) -> np.ndarray:
    high = trigger > 0.5
    edges = np.flatnonzero(high[1:] & ~high[:-1]) + 1
    if high[0]:
        edges = np.concatenate([[0], edges])
    return edges


def _trim_frozen_tail(t_ms: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop the trailing run of samples during which no channel changed."""
    if values.shape[0] < 2:
        return t_ms, values
    changed = np.any(values[1:] != values[:-1], axis=1)
    idx = np.flatnonzero(changed)
    if idx.size == 0:
        return t_ms[:1], values[:1]
    keep = idx[-1] + 2  # keep the first sample of the frozen plateau
    return t_ms[:keep], values[:keep]


def segment_cycles(trace: RawTrace, trigger_channel: int = 0,
                   timeout_ms: float = 10_000.0) -> list[CycleRecord]:
    """Cut the trace into one record per trigger rising edge.

    Records whose next trigger arrives later than timeout_ms are closed at
    start + timeout with complete=False and their frozen tail removed. The
    final record is closed by the end of data.
    """
    if timeout_ms <= 0:
        raise DataError("timeout_ms must be > 0")
    if not 0 <= trigger_channel < trace.n_channels:
        raise DataError(f"trigger channel {trigger_channel} does not exist")
    t = trace.t_ms
    if t.size == 0:
        return []
    if np.any(np.diff(t) <= 0):
        raise DataError("trace timestamps are not strictly increasing")

    edges = _rising_edges(trace.values[:, trigger_channel])
    records: list[CycleRecord] = []
    for k, start_idx in enumerate(edges):
        t_start = t[start_idx]
        if k + 1 < edges.size:
            t_next = t[edges[k + 1]]
        else:
            t_next = t[-1] + (t[-1] - t[-2] if t.size > 1 else 1.0)
        complete = (t_next - t_start) <= timeout_ms
        t_close = t_next if complete else t_start + timeout_ms
        end_idx = int(np.searchsorted(t, t_close, side="left"))
        seg_t = t[start_idx:end_idx]
        seg_v = trace.values[start_idx:end_idx]
        if not complete:
            seg_t, seg_v = _trim_frozen_tail(seg_t, seg_v)
        records.append(CycleRecord(k, float(t_start), float(t_close), seg_t, seg_v, complete))
    return records


def resample_cycle(record: CycleRecord, length: int = 200,
                   expected_duration_ms: float | None = None) -> NormalizedCycle:
    """Linearly interpolate every channel onto ``length`` equidistant points.

    For complete records the grid spans the record's own sample range. For
    early-closed records the grid spans the expected duration; positions
    beyond the last real sample are marked missing.
    """
    if length < 2:
        raise DataError("length must be >= 2")
    n_ch = record.values.shape[1]
    values = np.zeros((length, n_ch))
    missing = np.zeros((length, n_ch), dtype=bool)

    if record.t_ms.size == 0:
        missing[:] = True
        return NormalizedCycle(record.cycle_id, values, missing,
                               record.t_start_ms, record.t_end_ms, record.complete)

    t0 = record.t_ms[0]
    data_span = record.t_ms[-1] - t0
    if record.complete or expected_duration_ms is None:
        span = max(data_span, 1e-9)
    else:
        span = max(expected_duration_ms, 1e-9)
    grid = t0 + np.linspace(0.0, span, length)
    tail = grid > record.t_ms[-1] + 1e-9
    missing[tail, :] = True
    for ch in range(n_ch):
        values[:, ch] = np.interp(grid, record.t_ms, record.values[:, ch])
    values[tail, :] = 0.0
    return NormalizedCycle(record.cycle_id, values, missing,
                           record.t_start_ms, record.t_end_ms, record.complete)


def resample_run(records: list[CycleRecord], length: int = 200) -> list[NormalizedCycle]:
    """Resample a whole run, using the median complete-cycle duration as the
    expected span for early-closed records."""
    durations = [r.t_ms[-1] - r.t_ms[0] for r in records if r.complete and r.t_ms.size > 1]
    expected = float(np.median(durations)) if durations else None
    return [resample_cycle(r, length, expected) for r in records]


def cycles_in_windows(cycles: list[NormalizedCycle], windows: list[Window]) -> list[NormalizedCycle]:
    """Cycles fully contained in one of the given time windows."""
    out = []
    for c in cycles:
        if any(w.t_start_ms <= c.t_start_ms and c.t_end_ms <= w.t_end_ms for w in windows):
            out.append(c)
    return out


def compute_medians(cycles: list[NormalizedCycle]) -> MedianTable:
    """Median per (position, channel) over the complete cycles given.

    Callers restrict the input to certified-nominal cycles; incomplete
    records are skipped here so imputation never learns from gaps.
    """
    usable = [c for c in cycles if c.complete and not c.missing.any()]
    if not usable:
        raise DataError("no complete nominal cycles to impute from")
    stacked = np.stack([c.values for c in usable])
    return MedianTable(np.median(stacked, axis=0))


def impute_missing(cycle: NormalizedCycle, medians: MedianTable) -> NormalizedCycle:
    """Fill masked positions from the median table; the mask is retained."""
    if medians.values.shape != cycle.values.shape:
        raise DataError("median table shape does not match cycle")
    values = np.where(cycle.missing, medians.values, cycle.values)
    return replace(cycle, values=values)
