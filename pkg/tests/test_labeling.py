import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclelabel.labeling import DEFECT, NOMINAL, assign_labels
from cyclelabel.records import DefectReport, Window


def simple_cycles(n, duration=100.0):
    t_start = np.arange(n) * duration
    return np.arange(n), t_start, t_start + duration


def test_argmax_picks_highest_in_window():
    ids, t0, t1 = simple_cycles(3)
    scores = np.array([5.0, 80.0, 10.0])
    report = DefectReport(0.0, 300.0, "jam")
    labeled = assign_labels(scores, ids, t0, t1, [report], [])
    assert labeled.cycle_ids.tolist() == [1]
    assert labeled.labels == [DEFECT]
    assert labeled.class_names == ["jam"]
    assert set(labeled.excluded_cycle_ids.tolist()) == {0, 2}


def test_single_cycle_window_selected_regardless_of_score():
    ids, t0, t1 = simple_cycles(5)
    scores = np.array([90.0, 0.0, 95.0, 99.0, 50.0])
    report = DefectReport(150.0, 210.0, "jam")  # only cycle 1 completes inside
    labeled = assign_labels(scores, ids, t0, t1, [report], [])
    assert labeled.cycle_ids.tolist() == [1]


def test_tie_breaks_to_earliest_cycle():
    ids, t0, t1 = simple_cycles(4)
    scores = np.array([10.0, 70.0, 70.0, 5.0])
    labeled = assign_labels(scores, ids, t0, t1, [DefectReport(0.0, 400.0, "x")], [])
    assert labeled.cycle_ids.tolist() == [1]


def test_overlapping_reports_claim_distinct_cycles_in_time_order():
    ids, t0, t1 = simple_cycles(4)
    scores = np.array([1.0, 90.0, 80.0, 2.0])
    reports = [DefectReport(0.0, 400.0, "a"), DefectReport(50.0, 400.0, "b")]
    labeled = assign_labels(scores, ids, t0, t1, reports, [])
    rows = dict(zip(labeled.cycle_ids.tolist(), labeled.class_names))
    assert rows == {1: "a", 2: "b"}  # second report's argmax was already claimed


def test_empty_window_is_unassignable_not_fatal():
    ids, t0, t1 = simple_cycles(3)
    scores = np.array([1.0, 2.0, 3.0])
    report = DefectReport(1000.0, 1100.0, "ghost")
    labeled = assign_labels(scores, ids, t0, t1, [report], [])
    assert labeled.unassignable == [report]
    assert labeled.cycle_ids.size == 0


def test_window_fully_claimed_marks_later_report_unassignable():
    ids, t0, t1 = simple_cycles(3)
    scores = np.array([1.0, 9.0, 1.0])
    reports = [DefectReport(100.0, 210.0, "a"), DefectReport(150.0, 205.0, "b")]
    labeled = assign_labels(scores, ids, t0, t1, reports, [])
    assert len(labeled.unassignable) == 1
    assert labeled.unassignable[0].class_name == "b"


def test_nominal_windows_label_contained_cycles():
    ids, t0, t1 = simple_cycles(6)
    scores = np.linspace(0, 100, 6)
    windows = [Window(0.0, 300.0)]
    # report covers completions at 300, 400, 500 -> cycles 2, 3, 4; argmax is 4
    labeled = assign_labels(scores, ids, t0, t1, [DefectReport(250.0, 560.0, "x")], windows)
    got = dict(zip(labeled.cycle_ids.tolist(), labeled.labels))
    assert got == {0: NOMINAL, 1: NOMINAL, 2: NOMINAL, 4: DEFECT}
    assert labeled.excluded_cycle_ids.tolist() == [3]  # candidate, unclaimed, uncertified


def test_claimed_cycle_beats_nominal_window():
    ids, t0, t1 = simple_cycles(3)
    scores = np.array([1.0, 50.0, 2.0])
    windows = [Window(0.0, 300.0)]
    labeled = assign_labels(scores, ids, t0, t1, [DefectReport(0.0, 300.0, "x")], windows)
    got = dict(zip(labeled.cycle_ids.tolist(), labeled.labels))
    assert got[1] == DEFECT
    assert got[0] == NOMINAL and got[2] == NOMINAL


def test_one_report_one_label():
    rng = np.random.default_rng(0)
    ids, t0, t1 = simple_cycles(50)
    scores = rng.random(50) * 100
    starts = rng.uniform(0, 4500, size=12)
    reports = [DefectReport(float(s), float(s) + 600.0, "x") for s in starts]
    labeled = assign_labels(scores, ids, t0, t1, reports, [])
    assert labeled.cycle_ids.size <= len(reports)
    assert np.unique(labeled.cycle_ids).size == labeled.cycle_ids.size
    # every window held at least one unclaimed candidate here
    assert labeled.cycle_ids.size + len(labeled.unassignable) == len(reports)


@given(st.floats(min_value=0.01, max_value=10), st.floats(min_value=-50, max_value=50))
@settings(max_examples=40, deadline=None)
def test_argmax_invariant_under_monotone_transforms(scale, shift):
    rng = np.random.default_rng(7)
    ids, t0, t1 = simple_cycles(30)
    scores = rng.random(30) * 100
    reports = [DefectReport(200.0, 1200.0, "a"), DefectReport(1500.0, 2400.0, "b")]
    base = assign_labels(scores, ids, t0, t1, reports, [])
    monotone = assign_labels(scale * scores + shift, ids, t0, t1, reports, [])
    exp = assign_labels(np.exp(scores / 50.0), ids, t0, t1, reports, [])
    assert base.cycle_ids.tolist() == monotone.cycle_ids.tolist()
    assert base.cycle_ids.tolist() == exp.cycle_ids.tolist()


def test_raw_vs_normalized_scores_same_assignment():
    rng = np.random.default_rng(3)
    ids, t0, t1 = simple_cycles(40)
    raw = rng.normal(size=40)
    normalized = (raw - raw.min()) / (raw.max() - raw.min()) * 100
    reports = [DefectReport(500.0, 1700.0, "x")]
    a = assign_labels(raw, ids, t0, t1, reports, [])
    b = assign_labels(normalized, ids, t0, t1, reports, [])
    assert a.cycle_ids.tolist() == b.cycle_ids.tolist()


def test_membership_is_by_completion_time():
    ids, t0, t1 = simple_cycles(3)
    scores = np.array([1.0, 2.0, 3.0])
    # window covers cycle 1's interior but not its completion time
    labeled = assign_labels(scores, ids, t0, t1, [DefectReport(110.0, 190.0, "x")], [])
    assert labeled.cycle_ids.size == 0
    labeled = assign_labels(scores, ids, t0, t1, [DefectReport(110.0, 200.0, "x")], [])
    assert labeled.cycle_ids.tolist() == [1]
