"""Weak labeling of high-rate machine cycles via anomaly scoring.

Turns unlabeled multichannel process traces plus coarse, time-windowed
defect reports into a labeled training set: every product cycle is scored
by an anomaly detector, each report is assigned to the highest-scoring
cycle inside its window, and a classifier is trained on the result.
Pipeline variants are ranked by the relative-score metric m and checked
with score variance, a chi-square spread statistic, and cross-validated
precision/recall/F1.
"""

__version__ = "0.1.0"

from .records import DefectReport, Window

__all__ = ["DefectReport", "Window", "__version__"]
