"""One pipeline variant, end to end.

A variant is scale -> reduce -> detect -> normalize scores -> assign labels
-> train forest -> predict -> metrics, over a shared bundle of extracted
features and report/nominal-window data. Stage failures are captured into
the result's diagnostics instead of raised, so a grid run never aborts on a
single bad combination.
"""

from __future__ import annotations

import hashlib
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import detectors, metrics
from .errors import CycleLabelError
from .features import FeatureMatrix, fit_scaler, variance_filter
from .forest import RandomForestModel, predict, train_random_forest
from .labeling import DEFECT, LabeledDataset, assign_labels
from .records import DefectReport, Window
from .reduction import fit_factor_analysis, fit_pca

SCALERS = ("none", "standard", "minmax", "robust")
REDUCER_PREFIXES = ("none", "variance_only", "pca", "fa")
SUBSPACE_FRACTIONS = (1.0, 0.5, 0.7)


@dataclass(frozen=True)
class PipelineConfig:
    """One grid variant's knobs; hashable and canonically encodable."""

    scaler: str = "standard"
    reducer: str = "variance_only"  # none | variance_only | pca:minka | pca:<k> | fa:<k>
    detector: str = "knn"
    detector_params: tuple[tuple[str, object], ...] = ()
    subspace_fraction: float = 1.0
    ensemble_size: int | None = None  # None -> 1 at fraction 1.0, else 80
    mode: str = "semi_supervised"
    weighting: str = "none"

    def __post_init__(self) -> None:
        from .errors import ConfigError

        if self.scaler not in SCALERS:
            raise ConfigError(f"unknown scaler {self.scaler!r}")
        root = self.reducer.split(":", 1)[0]
        if root not in REDUCER_PREFIXES:
            raise ConfigError(f"unknown reducer {self.reducer!r}")
        if root in ("pca", "fa"):
            arg = self.reducer.split(":", 1)[1] if ":" in self.reducer else ""
            if not (arg == "minka" and root == "pca") and not arg.isdigit():
                raise ConfigError(f"reducer {self.reducer!r} needs :minka or :<k>")
        if self.detector not in detectors.DETECTOR_KINDS:
            raise ConfigError(f"unknown detector {self.detector!r}")
        if not 0 < self.subspace_fraction <= 1.0:
            raise ConfigError("subspace_fraction must be in (0, 1]")
        if self.mode not in detectors.MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.weighting not in ("none", "balanced"):
            raise ConfigError(f"unknown weighting {self.weighting!r}")

    @property
    def size(self) -> int:
        if self.ensemble_size is not None:
            return self.ensemble_size
        return 1 if self.subspace_fraction >= 1.0 else 80

    def variant_id(self) -> str:
        params = ",".join(f"{k}={v}" for k, v in sorted(self.detector_params))
        parts = [
            f"scaler={self.scaler}",
            f"reducer={self.reducer}",
            f"detector={self.detector}",
            f"params={params}",
            f"subspace={self.subspace_fraction:g}x{self.size}",
            f"mode={self.mode}",
            f"weighting={self.weighting}",
        ]
        return "|".join(parts)

    def derived_seed(self, global_seed: int) -> int:
        """Stable per-variant seed from the canonical encoding, independent of
        grid position or evaluation order."""
        digest = hashlib.sha256(f"{global_seed}:{self.variant_id()}".encode()).digest()
        return int.from_bytes(digest[:8], "big") % (2**63)


@dataclass
class PipelineInputs:
    """Shared read-only inputs for all variants of a grid."""

    features: FeatureMatrix  # raw features, one row per cycle
    cycle_ids: np.ndarray
    t_start_ms: np.ndarray
    t_end_ms: np.ndarray
    reports: list[DefectReport]
    nominal_windows: list[Window]
    horizon_ms: float
    true_labels: np.ndarray | None = None  # per-cycle class names, when simulated

    def nominal_row_mask(self) -> np.ndarray:
        mask = np.zeros(self.cycle_ids.size, dtype=bool)
        for w in self.nominal_windows:
            mask |= (self.t_start_ms >= w.t_start_ms) & (self.t_end_ms <= w.t_end_ms)
        return mask


@dataclass
class PipelineResult:
    config: PipelineConfig
    variant: str
    failed: bool = False
    failure_reason: str = ""
    scores: detectors.AnomalyScores | None = None
    labeled: LabeledDataset | None = None
    classifier: RandomForestModel | None = None
    predictions: np.ndarray | None = None
    metrics_row: metrics.MetricsRow | None = None
    diagnostics: dict = field(default_factory=dict)
    wall_time_s: float = 0.0


def _parse_reducer(reducer: str) -> tuple[str, object]:
    root, _, arg = reducer.partition(":")
    if root in ("none", "variance_only"):
        return root, None
    if root == "pca":
        return "pca", ("minka" if arg == "minka" else int(arg))
    return "fa", int(arg)


def _transform_features(config: PipelineConfig, inputs: PipelineInputs,
                        fit_mask: np.ndarray) -> tuple[np.ndarray, list[dict]]:
    """Variance filter, scaler, and reducer; all fitted on fit_mask rows."""
    values = inputs.features.values
    lineage: list[dict] = []
    root, arg = _parse_reducer(config.reducer)

    if root != "none":
        mask = variance_filter(values[fit_mask])
        values = values[:, mask]
        lineage.append({"step": "variance_filter", "kept": int(mask.sum())})

    scaler = fit_scaler(values[fit_mask], config.scaler)
    values = scaler.apply(values)
    lineage.append({"step": "scaler", "kind": config.scaler})

    if root == "pca":
        model = fit_pca(values[fit_mask], arg)
        values = model.transform(values)
        lineage.append({"step": "pca", "k": model.k})
    elif root == "fa":
        model = fit_factor_analysis(values[fit_mask], arg)
        values = model.transform(values)
        lineage.append({"step": "fa", "k": model.k})
    return values, lineage


def run_pipeline(config: PipelineConfig, inputs: PipelineInputs,
                 global_seed: int = 0, cv_folds: int = 5,
                 chi2_bins: int = 20, chi2_axis: str = "time") -> PipelineResult:
    """Evaluate one variant; never raises on numeric stage failures."""
    started = time.monotonic()
    result = PipelineResult(config=config, variant=config.variant_id())
    seed = config.derived_seed(global_seed)
    flags: list[str] = []

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")

            nominal_mask = inputs.nominal_row_mask()
            fit_mask = nominal_mask if config.mode == "semi_supervised" else np.ones(
                inputs.cycle_ids.size, dtype=bool)
            if fit_mask.sum() < 2:
                raise CycleLabelError("fewer than 2 training rows for this mode")

            values, lineage = _transform_features(config, inputs, fit_mask)
            result.diagnostics["lineage"] = lineage
            result.diagnostics["detector_dim"] = int(values.shape[1])

            params = dict(config.detector_params)
            if config.subspace_fraction >= 1.0 and config.size == 1:
                model = detectors.fit_detector(
                    config.detector, values[fit_mask], params, seed=seed, mode=config.mode)
                raw = detectors.score(model, values)
            else:
                ensemble = detectors.fit_subspace_ensemble(
                    config.detector, values[fit_mask], config.subspace_fraction,
                    config.size, seed=seed, mode=config.mode, params=params)
                raw = detectors.score_ensemble(ensemble, values)
            scores = detectors.AnomalyScores.from_raw(raw, config.variant_id())
            result.scores = scores
            if scores.degenerate:
                flags.append("constant_scores")

            labeled = assign_labels(scores.normalized, inputs.cycle_ids, inputs.t_start_ms,
                                    inputs.t_end_ms, inputs.reports, inputs.nominal_windows)
            result.labeled = labeled
            result.diagnostics["unassignable_reports"] = len(labeled.unassignable)
            result.diagnostics["defect_rows"] = labeled.n_defects
            result.diagnostics["nominal_rows"] = len(labeled.labels) - labeled.n_defects

            x_labeled = values[labeled.row_indices]
            y_labeled = labeled.label_array()

            if labeled.n_defects == 0 or labeled.n_defects == len(labeled.labels):
                flags.append("single_class_labels")
                predictions = np.full(inputs.cycle_ids.size, "nominal")
                cv = None
            else:
                classifier = train_random_forest(
                    x_labeled, y_labeled, weighting=config.weighting, seed=seed)
                result.classifier = classifier
                predictions = predict(classifier, values)[0]
                try:
                    cv = metrics.cross_validate(
                        x_labeled, y_labeled, k=cv_folds, seed=seed,
                        rf_params={"weighting": config.weighting})
                except CycleLabelError as exc:
                    flags.append(f"cv_failed:{exc}")
                    cv = None
            result.predictions = predictions

            detected = np.flatnonzero(predictions == DEFECT)
            if detected.size == 0:
                flags.append("no_detected_defects")
                m_value = 0.0
            else:
                m_value = metrics.relative_score(scores.normalized, detected)
                if np.isnan(m_value):
                    flags.append("zero_mean_score")
                    m_value = 0.0

            axis = inputs.t_end_ms if chi2_axis == "time" else np.arange(
                inputs.cycle_ids.size, dtype=float)
            horizon = inputs.horizon_ms if chi2_axis == "time" else float(
                inputs.cycle_ids.size)
            chi2 = metrics.chi2_uniformity(axis[detected], horizon, chi2_bins)
            if detected.size == 0:
                flags.append("chi2_no_detections")

            row = metrics.MetricsRow(
                variant=config.variant_id(),
                m=m_value,
                score_variance=metrics.score_variance(scores.normalized),
                chi2_stat=chi2,
                f1_defect=cv["f1_defect"] if cv else 0.0,
                precision_defect=cv["precision_defect"] if cv else 0.0,
                recall_defect=cv["recall_defect"] if cv else 0.0,
                f1_macro=cv["f1_macro"] if cv else 0.0,
                precision_macro=cv["precision_macro"] if cv else 0.0,
                recall_macro=cv["recall_macro"] if cv else 0.0,
            )
            if cv is None:
                flags.append("cv_skipped")
            elif cv.get("flags"):
                flags.extend(cv["flags"])

            if inputs.true_labels is not None:
                gt = metrics.ground_truth_eval(predictions, inputs.true_labels)
                row = replace(row, gt_precision=gt["gt_precision"],
                              gt_recall=gt["gt_recall"], gt_f1=gt["gt_f1"])
                flags.extend(gt["flags"])

            result.metrics_row = replace(row, flags=tuple(flags))
            result.diagnostics["warnings"] = [str(w.message) for w in caught]
    except (CycleLabelError, np.linalg.LinAlgError) as exc:
        result.failed = True
        result.failure_reason = f"{type(exc).__name__}: {exc}"
    result.wall_time_s = time.monotonic() - started
    return result
