"""Synthetic packaging-line simulator.

Generates a deterministic multichannel trace of a discrete cartoning-style
process: a trigger channel marking product cycles, binary actuator
channels, smooth analog channels with Gaussian noise, and monotone encoder
ramps. A configurable share of cycles carries a defect that perturbs a
subset of channels; stop-causing defects freeze the whole trace mid-cycle
for a random duration. Alongside the raw trace the simulator emits
per-cycle ground truth, certified defect-free windows, and a report log
with jittered observation times, so downstream labeling can be evaluated
against a known truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .records import DefectReport, Window

SENSOR_KINDS = ("binary", "analog", "encoder")

# Seed root for per-channel template parameters. Fixed so that channel
# shapes depend only on the channel index, never on the run seed: two runs
# at different speeds or seeds share identical nominal templates.
_TEMPLATE_SEED = 0xC1C7E

NOMINAL = "nominal"


def default_sensor_kinds(n_sensors: int, trigger_channel: int = 0) -> tuple[str, ...]:
    """Deterministic mixed taxonomy: mostly analog, some binary, a few encoders."""
    kinds = []
    for i in range(n_sensors):
        if i == trigger_channel or i % 8 in (0, 3):
            kinds.append("binary")
        elif i % 8 == 6:
            kinds.append("encoder")
        else:
            kinds.append("analog")
    return tuple(kinds)


@dataclass(frozen=True)
class MachineConfig:
    """Static description of the simulated machine."""

    n_sensors: int = 40
    sample_period_ms: float = 1.0
    nominal_rate: float = 120.0  # products per minute
    horizon: int = 1000  # total cycles to produce
    # Piecewise-constant speed curve: (from_cycle, products/minute) steps.
    speed_profile: tuple[tuple[int, float], ...] = ()
    sensor_kinds: tuple[str, ...] | None = None
    noise_sigma: float = 0.05  # nominal analog channel noise
    trigger_channel: int = 0
    nominal_margin_cycles: int = 2  # cycles around a defect excluded from nominal windows
    stop_duration_range_ms: tuple[float, float] = (5_000.0, 30_000.0)

    def __post_init__(self) -> None:
        if self.n_sensors < 1:
            raise ConfigError("n_sensors must be >= 1")
        if self.sample_period_ms <= 0:
            raise ConfigError("sample_period_ms must be > 0")
        if self.nominal_rate <= 0:
            raise ConfigError("nominal_rate must be > 0")
        if not 0 <= self.trigger_channel < self.n_sensors:
            raise ConfigError("trigger_channel out of range")
        kinds = self.kinds()
        if len(kinds) != self.n_sensors:
            raise ConfigError("sensor_kinds length must equal n_sensors")
        for k in kinds:
            if k not in SENSOR_KINDS:
                raise ConfigError(f"unknown sensor kind {k!r}")
        if kinds[self.trigger_channel] != "binary":
            raise ConfigError("trigger channel must be binary")
        for start, rate in self.speed_profile:
            if rate <= 0:
                raise ConfigError("speed profile rates must be > 0")
            if start < 0:
                raise ConfigError("speed profile cycle indices must be >= 0")

    def kinds(self) -> tuple[str, ...]:
        if self.sensor_kinds is not None:
            return tuple(self.sensor_kinds)
        return default_sensor_kinds(self.n_sensors, self.trigger_channel)

    def rate_at(self, cycle_index: int) -> float:
        rate = self.nominal_rate
        for start, r in sorted(self.speed_profile):
            if cycle_index >= start:
                rate = r
        return rate

    def cycle_duration_ms(self, cycle_index: int) -> float:
        return 60_000.0 / self.rate_at(cycle_index)


@dataclass(frozen=True)
class DefectSpec:
    """One defect class: how often it occurs and how it marks the trace."""

    class_name: str
    relative_frequency: float
    amplitude_sigma: float = 4.0  # perturbation size in units of nominal noise sigma
    affected_channels: tuple[int, ...] = ()  # empty -> deterministic default subset
    causes_stop: bool = False

    def __post_init__(self) -> None:
        if self.relative_frequency < 0:
            raise ConfigError("relative_frequency must be >= 0")
        if self.amplitude_sigma < 0:
            raise ConfigError("amplitude_sigma must be >= 0")


# Default defect census of the simulated cartoner: five classes with a
# strongly skewed frequency mix (37:7:6:2:1), downstream stops halting the
# machine. Channel subsets are filled in per machine config at run time.
DEFAULT_DEFECTS: tuple[DefectSpec, ...] = (
    DefectSpec("misplaced_product", 37.0),
    DefectSpec("downstream_stop", 7.0, causes_stop=True),
    DefectSpec("carton_erection_fault", 6.0),
    DefectSpec("insertion_fault", 2.0),
    DefectSpec("deposit_fault", 1.0),
)


@dataclass
class RawTrace:
    t_ms: np.ndarray  # (n_samples,)
    values: np.ndarray  # (n_samples, n_channels)
    channel_names: list[str]
    kinds: list[str]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CycleTruth:
    cycle_id: int
    t_start_ms: float
    t_end_ms: float
    class_name: str  # NOMINAL or a defect class
    machine_detected: bool = False

    @property
    def is_defect(self) -> bool:
        return self.class_name != NOMINAL


@dataclass
class SimulationOutput:
    trace: RawTrace
    cycle_markers: np.ndarray  # trigger rising-edge times, one per cycle (ms)
    ground_truth: list[CycleTruth]
    nominal_windows: list[Window]
    reports: list[DefectReport]
    config: MachineConfig
    defects: tuple[DefectSpec, ...]

    def truth_labels(self) -> list[str]:
        return [t.class_name for t in self.ground_truth]


def _channel_rng(channel: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((_TEMPLATE_SEED, channel)))


@lru_cache(maxsize=None)
def _binary_template(channel: int, trigger: bool) -> tuple[float, float]:
    """Pulse window (phase_on, phase_off) for a binary channel."""
    if trigger:
        return 0.0, 0.05
    rng = _channel_rng(channel)
    on = 0.1 + 0.5 * rng.random()
    width = 0.1 + 0.3 * rng.random()
    return on, min(on + width, 0.95)


@lru_cache(maxsize=None)
def _analog_template(channel: int) -> tuple[float, float, float, float, float]:
    """Coefficients (offset, amp1, phase1, amp2, phase2) of a smooth base curve."""
    rng = _channel_rng(channel)
    a0 = rng.uniform(-1.0, 1.0)
    a1 = rng.uniform(0.5, 1.5)
    p1 = rng.uniform(0.0, 2.0 * math.pi)
    a2 = rng.uniform(0.1, 0.5)
    p2 = rng.uniform(0.0, 2.0 * math.pi)
    return a0, a1, p1, a2, p2


def nominal_channel_values(config: MachineConfig, channel: int, phase: np.ndarray,
                           rng: np.random.Generator | None = None) -> np.ndarray:
    """Evaluate one channel's nominal template on a phase grid in [0, 1)."""
    kind = config.kinds()[channel]
    if kind == "binary":
        on, off = _binary_template(channel, channel == config.trigger_channel)
        return ((phase >= on) & (phase < off)).astype(float)
    if kind == "encoder":
        return 360.0 * phase
    a0, a1, p1, a2, p2 = _analog_template(channel)
    base = a0 + a1 * np.sin(2 * math.pi * phase + p1) + a2 * np.sin(4 * math.pi * phase + p2)
    if rng is not None and config.noise_sigma > 0:
        base = base + rng.normal(0.0, config.noise_sigma, size=phase.shape)
    return base


def _default_affected_channels(spec_index: int, config: MachineConfig) -> tuple[int, ...]:
    """Deterministic per-class channel subset, skipping the trigger channel."""
    rng = np.random.default_rng(np.random.SeedSequence((_TEMPLATE_SEED, 1000 + spec_index)))
    candidates = [c for c in range(config.n_sensors) if c != config.trigger_channel]
    n_affected = min(len(candidates), 3 + spec_index % 3)
    picked = rng.choice(len(candidates), size=n_affected, replace=False)
    return tuple(sorted(candidates[i] for i in picked))


def resolve_defects(defects: tuple[DefectSpec, ...] | list[DefectSpec],
                    config: MachineConfig) -> tuple[DefectSpec, ...]:
    """Fill empty affected_channels with deterministic per-class defaults."""
    out = []
    for i, spec in enumerate(defects):
        if not spec.affected_channels:
            spec = replace(spec, affected_channels=_default_affected_channels(i, config))
        for ch in spec.affected_channels:
            if not 0 <= ch < config.n_sensors:
                raise ConfigError(f"defect {spec.class_name!r} affects unknown channel {ch}")
        out.append(spec)
    return tuple(out)


def _perturb_cycle(values: np.ndarray, phase: np.ndarray, spec: DefectSpec,
                   config: MachineConfig, rng: np.random.Generator) -> None:
    """Apply the defect's perturbation in place to one cycle's samples.

    Binary channels get a pulse shift (levels stay two-valued), analog
    channels an additive bump scaled by amplitude_sigma in noise units,
    encoders a stall followed by a steeper catch-up ramp (still monotone).
    """
    kinds = config.kinds()
    sigma = config.noise_sigma if config.noise_sigma > 0 else 0.05
    for ch in spec.affected_channels:
        kind = kinds[ch]
        if kind == "binary":
            shift = min(0.3, 0.02 * spec.amplitude_sigma)
            on, off = _binary_template(ch, ch == config.trigger_channel)
            on2, off2 = min(on + shift, 0.98), min(off + shift, 1.0)
            values[:, ch] = ((phase >= on2) & (phase < off2)).astype(float)
        elif kind == "encoder":
            # stall mid-cycle, then a steeper linear catch-up to the same
            # end value; stays monotone non-decreasing
            stall_len = min(0.3, 0.03 * spec.amplitude_sigma)
            start = rng.uniform(0.2, 0.7 - stall_len)
            catch = (phase - (start + stall_len)) / max(1e-9, 1.0 - start - stall_len)
            ramp = np.where(
                phase >= start + stall_len,
                start + catch * (1.0 - start),
                np.minimum(phase, start),
            )
            values[:, ch] = 360.0 * ramp
        else:
            amp = spec.amplitude_sigma * sigma
            center = rng.uniform(0.25, 0.75)
            bump = amp * np.exp(-0.5 * ((phase - center) / 0.12) ** 2)
            values[:, ch] += bump


def _draw_defect_cycles(horizon: int, n_defects: int, defects: tuple[DefectSpec, ...],
                        rng: np.random.Generator) -> dict[int, DefectSpec]:
    weights = np.array([d.relative_frequency for d in defects], dtype=float)
    total = weights.sum()
    if n_defects > 0 and (len(defects) == 0 or total <= 0):
        raise ConfigError("defect_rate > 0 but all defect weights are zero")
    cycle_ids = np.sort(rng.choice(horizon, size=n_defects, replace=False))
    classes = rng.choice(len(defects), size=n_defects, p=weights / total) if n_defects else []
    return {int(c): defects[int(k)] for c, k in zip(cycle_ids, classes)}


def simulate(config: MachineConfig,
             defects: tuple[DefectSpec, ...] | list[DefectSpec] = DEFAULT_DEFECTS,
             defect_rate: float = 0.0,
             seed: int = 0,
             jitter_ms: float = 5_000.0,
             miss_rate: float = 0.0) -> SimulationOutput:
    """Run one deterministic simulation.

    The number of defective cycles is round(defect_rate * horizon); classes
    are drawn with the specs' relative frequencies. Identical (config,
    defects, seed) give bit-identical output.
    """
    if config.horizon <= 0:
        raise ConfigError("horizon must be >= 1 (empty simulation)")
    if not 0 <= defect_rate < 1:
        raise ConfigError("defect_rate must be in [0, 1)")

    defects = resolve_defects(tuple(defects), config)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    n_defects = int(round(defect_rate * config.horizon))
    defect_map = _draw_defect_cycles(config.horizon, n_defects, defects, rng)

    kinds = config.kinds()
    dt = config.sample_period_ms
    segments: list[np.ndarray] = []
    truths: list[CycleTruth] = []
    markers = np.empty(config.horizon)

    # timestamps derive from sample counts so cycle boundaries equal trace
    # sample times bit for bit
    sample_cursor = 0
    for i in range(config.horizon):
        duration = config.cycle_duration_ms(i)
        n_samples = max(2, int(round(duration / dt)))
        phase = np.arange(n_samples) / n_samples
        values = np.empty((n_samples, config.n_sensors))
        for ch in range(config.n_sensors):
            values[:, ch] = nominal_channel_values(config, ch, phase, rng)

        spec = defect_map.get(i)
        if spec is not None:
            _perturb_cycle(values, phase, spec, config, rng)

        t_start = sample_cursor * dt
        markers[i] = t_start
        if spec is not None and spec.causes_stop:
            # freeze mid-cycle: hold every channel for the stop duration
            frac = rng.uniform(0.3, 0.7)
            stop_ms = rng.uniform(*config.stop_duration_range_ms)
            cut = max(1, int(round(frac * n_samples)))
            n_frozen = max(1, int(round(stop_ms / dt)))
            frozen = np.repeat(values[cut - 1 : cut], n_frozen, axis=0)
            values = np.concatenate([values[:cut], frozen, values[cut:]], axis=0)
            n_samples = values.shape[0]

        segments.append(values)
        sample_cursor += n_samples
        t_end = sample_cursor * dt
        class_name = spec.class_name if spec is not None else NOMINAL
        machine_detected = bool(spec is not None and spec.causes_stop)
        truths.append(CycleTruth(i, t_start, t_end, class_name, machine_detected))

    all_values = np.concatenate(segments, axis=0)
    t_ms = np.arange(all_values.shape[0]) * dt
    trace = RawTrace(
        t_ms=t_ms,
        values=all_values,
        channel_names=[f"ch{c:02d}" for c in range(config.n_sensors)],
        kinds=list(kinds),
    )

    windows = nominal_windows_from_truth(truths, config.nominal_margin_cycles)
    reports = emit_reports(truths, jitter_ms=jitter_ms, miss_rate=miss_rate, seed=seed)
    return SimulationOutput(trace, markers, truths, windows, reports, config, defects)


def nominal_windows_from_truth(truths: list[CycleTruth], margin_cycles: int = 2,
                               min_run: int = 3) -> list[Window]:
    """Certify maximal runs of cycles at least margin_cycles away from any defect."""
    n = len(truths)
    certifiable = np.ones(n, dtype=bool)
    for t in truths:
        if t.is_defect:
            lo = max(0, t.cycle_id - margin_cycles)
            hi = min(n, t.cycle_id + margin_cycles + 1)
            certifiable[lo:hi] = False
    windows: list[Window] = []
    start = None
    for i in range(n + 1):
        ok = i < n and certifiable[i]
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start >= min_run:
                windows.append(Window(truths[start].t_start_ms, truths[i - 1].t_end_ms))
            start = None
    return windows


def emit_reports(ground_truth: list[CycleTruth], jitter_ms: float = 5_000.0,
                 miss_rate: float = 0.0, seed: int = 0) -> list[DefectReport]:
    """Produce the report log for a run's ground truth.

    Operator reports get a window of width 2*jitter_ms whose center is
    uniformly offset from the defect cycle's completion time, so the true
    time always lies inside the window. Machine-detected defects are logged
    exactly, as the stop cycle's own time span (the controller knows which
    cycle halted even when the twin was closed by timeout). A fraction
    miss_rate of defects goes unreported.
    """
    if jitter_ms < 0:
        raise ConfigError("jitter_ms must be >= 0")
    if not 0 <= miss_rate <= 1:
        raise ConfigError("miss_rate must be in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    reports: list[DefectReport] = []
    for t in ground_truth:
        if not t.is_defect:
            continue
        missed = rng.random() < miss_rate
        if missed:
            continue
        if t.machine_detected:
            reports.append(
                DefectReport(t.t_start_ms, t.t_end_ms, t.class_name, source="machine")
            )
        else:
            offset = rng.uniform(-jitter_ms, jitter_ms)
            center = t.t_end_ms + offset
            reports.append(
                DefectReport(center - jitter_ms, center + jitter_ms, t.class_name)
            )
    return reports
