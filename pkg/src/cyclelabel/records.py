"""Shared record types passed between pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Window:
    """Closed time interval in trace milliseconds."""

    t_start_ms: float
    t_end_ms: float

    def __post_init__(self) -> None:
        if self.t_end_ms < self.t_start_ms:
            raise ValueError(f"window end {self.t_end_ms} before start {self.t_start_ms}")

    def contains(self, t_ms: float) -> bool:
        return self.t_start_ms <= t_ms <= self.t_end_ms


@dataclass(frozen=True)
class DefectReport:
    """One defect report: an uncertain time window plus the reported class.

    ``source`` distinguishes manual operator reports from defects the
    machine logged itself (those carry exact timestamps).
    """

    t_start_ms: float
    t_end_ms: float
    class_name: str
    source: str = "operator"

    def __post_init__(self) -> None:
        if self.t_end_ms < self.t_start_ms:
            raise ValueError("report window end before start")
        if self.source not in ("operator", "machine"):
            raise ValueError(f"unknown report source {self.source!r}")

    @property
    def window(self) -> Window:
        return Window(self.t_start_ms, self.t_end_ms)
