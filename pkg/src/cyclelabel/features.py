"""Statistical per-cycle features, variance filtering, and scaling.

Each channel contributes five features chosen by its sensor kind: plain
location/spread statistics for analog channels, pulse-shape figures for
binary channels, and motion figures for encoder ramps. Variance filtering
drops features that never move; scaling brings the survivors onto a common
footing before reduction and detection.

Population (1/n) variance is the convention throughout this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cycles import NormalizedCycle
from .errors import ConfigError, DegenerateDataError

FEATURES_BY_KIND = {
    "analog": ("mean", "std", "min", "max", "rms"),
    "binary": ("duty", "rising_count", "first_rise", "last_fall", "longest_high"),
    "encoder": ("disp", "slope_mean", "slope_std", "max_abs_dd", "end_value"),
}

SCALER_KINDS = ("none", "standard", "minmax", "robust")


@dataclass
class FeatureMatrix:
    """Rows = cycles, columns = named features, plus fitted-transform lineage."""

    values: np.ndarray
    names: list[str]
    lineage: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ConfigError("feature values must be 2-D")
        if self.values.shape[1] != len(self.names):
            raise ConfigError("column count does not match feature names")
        if len(set(self.names)) != len(self.names):
            raise ConfigError("feature names must be unique")
        if not np.all(np.isfinite(self.values)):
            raise DegenerateDataError("feature matrix contains non-finite values")

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def select(self, mask: np.ndarray, step: dict) -> "FeatureMatrix":
        names = [n for n, keep in zip(self.names, mask) if keep]
        return FeatureMatrix(self.values[:, mask], names, self.lineage + [step])

    def with_values(self, values: np.ndarray, names: list[str], step: dict) -> "FeatureMatrix":
        return FeatureMatrix(values, names, self.lineage + [step])


def feature_names(kinds: list[str] | tuple[str, ...]) -> list[str]:
    names = []
    for ch, kind in enumerate(kinds):
        for feat in FEATURES_BY_KIND[kind]:
            names.append(f"ch{ch:02d}_{feat}")
    return names


def _binary_features(x: np.ndarray) -> np.ndarray:
    """(n, L) channel samples -> (n, 5). Channels are binarized at 0.5."""
    n, length = x.shape
    b = x > 0.5
    duty = b.mean(axis=1)

    rise = b[:, 1:] & ~b[:, :-1]
    fall = ~b[:, 1:] & b[:, :-1]
    rising_count = rise.sum(axis=1).astype(float)

    any_rise = rise.any(axis=1)
    first_rise = np.where(any_rise, rise.argmax(axis=1) + 1, -1).astype(float)
    any_fall = fall.any(axis=1)
    last_fall = np.where(
        any_fall, length - 1 - fall[:, ::-1].argmax(axis=1), -1
    ).astype(float)

    padded = np.zeros((n, length + 2), dtype=np.int8)
    padded[:, 1:-1] = b
    d = np.diff(padded, axis=1)
    rows_s, cols_s = np.nonzero(d == 1)
    rows_e, cols_e = np.nonzero(d == -1)
    longest = np.zeros(n)
    np.maximum.at(longest, rows_s, (cols_e - cols_s).astype(float))
    return np.column_stack([duty, rising_count, first_rise, last_fall, longest])


def _analog_features(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=1)
    std = x.std(axis=1)
    rms = np.sqrt((x**2).mean(axis=1))
    return np.column_stack([mean, std, x.min(axis=1), x.max(axis=1), rms])


def _encoder_features(x: np.ndarray) -> np.ndarray:
    disp = x[:, -1] - x[:, 0]
    slopes = np.diff(x, axis=1)
    slope_mean = slopes.mean(axis=1)
    slope_std = slopes.std(axis=1)
    if x.shape[1] >= 3:
        max_dd = np.abs(np.diff(x, n=2, axis=1)).max(axis=1)
    else:
        max_dd = np.zeros(x.shape[0])
    return np.column_stack([disp, slope_mean, slope_std, max_dd, x[:, -1]])


_KIND_FUNCS = {
    "analog": _analog_features,
    "binary": _binary_features,
    "encoder": _encoder_features,
}


def extract_features(cycle: NormalizedCycle, kinds: list[str] | tuple[str, ...]) -> np.ndarray:
    """Feature vector of a single imputed cycle."""
    return feature_matrix([cycle], kinds).values[0]


def feature_matrix(cycles: list[NormalizedCycle],
                   kinds: list[str] | tuple[str, ...]) -> FeatureMatrix:
    """Extract features for a run of imputed cycles (rows follow input order)."""
    if not cycles:
        raise DegenerateDataError("no cycles to featurize")
    n_ch = cycles[0].values.shape[1]
    if len(kinds) != n_ch:
        raise ConfigError("kinds length does not match channel count")
    stacked = np.stack([c.values for c in cycles])  # (n, L, C)
    if not np.all(np.isfinite(stacked)):
        raise DegenerateDataError("cycles contain non-finite values; impute first")
    cols = []
    for ch, kind in enumerate(kinds):
        cols.append(_KIND_FUNCS[kind](stacked[:, :, ch]))
    values = np.concatenate(cols, axis=1)
    return FeatureMatrix(values, feature_names(kinds))


def variance_filter(values: np.ndarray, threshold: float = 1e-8) -> np.ndarray:
    """Boolean mask of columns whose population variance exceeds threshold."""
    if values.size == 0:
        raise DegenerateDataError("empty feature matrix")
    mask = values.var(axis=0) > threshold
    if not mask.any():
        raise DegenerateDataError("variance filter removed every column")
    return mask


@dataclass
class ScalerModel:
    """Per-feature affine scaler; zero denominators are replaced by 1."""

    kind: str
    center: np.ndarray
    scale: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.center) / self.scale

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.scale + self.center


def fit_scaler(values: np.ndarray, kind: str) -> ScalerModel:
    if kind not in SCALER_KINDS:
        raise ConfigError(f"unknown scaler kind {kind!r}")
    d = values.shape[1]
    if kind == "none":
        return ScalerModel(kind, np.zeros(d), np.ones(d))
    if kind == "standard":
        center = values.mean(axis=0)
        scale = values.std(axis=0)
    elif kind == "minmax":
        center = values.min(axis=0)
        scale = values.max(axis=0) - center
    else:  # robust
        center = np.median(values, axis=0)
        q75, q25 = np.percentile(values, [75, 25], axis=0)
        scale = q75 - q25
    scale = np.where(scale == 0, 1.0, scale)
    return ScalerModel(kind, center, scale)
