"""Accuracy, AUC, reliability statistics, and the learning-curve tracker."""

import numpy as np
import pytest

from trivqa.errors import ConfigError, DataFormatError, ShapeError
from trivqa.metrics import (
    CurveTracker,
    ReliabilityRecord,
    attribute_accuracy,
    binary_metrics,
    reliability_measure,
    reliability_report,
)

from conftest import tiny_schema


def rec(sid, attribute, direction, mse, correct):
    return ReliabilityRecord(
        sample_id=sid,
        attribute=attribute,
        direction=direction,
        mse=mse,
        euclidean=float(np.sqrt(mse * 4)),
        answer_correct=correct,
    )


def auc_pair_oracle(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def test_attribute_accuracy_all_correct():
    labels = np.array([[0, 1], [2, 0], [1, 1]])
    acc = attribute_accuracy(labels, labels, tiny_schema())
    assert np.array_equal(acc, [1.0, 1.0])


def test_attribute_accuracy_hand_count():
    pred = np.array([[0, 1], [1, 1], [2, 0], [0, 0], [1, 1]])
    lab = np.array([[0, 0], [1, 1], [0, 0], [0, 1], [1, 1]])
    acc = attribute_accuracy(pred, lab, tiny_schema())
    assert np.allclose(acc, [4 / 5, 3 / 5])


def test_attribute_accuracy_shape_checks():
    with pytest.raises(ShapeError):
        attribute_accuracy(np.zeros((3, 1)), np.zeros((3, 2)), tiny_schema())
    with pytest.raises(ShapeError):
        attribute_accuracy(np.zeros((0, 2)), np.zeros((0, 2)), tiny_schema())


def test_binary_metrics_hand_confusion():
    # scores >= 0.5 predict positive: tp=2 fn=1 tn=2 fp=1
    scores = np.array([0.9, 0.6, 0.2, 0.1, 0.3, 0.8])
    labels = np.array([1, 1, 1, 0, 0, 0])
    m = binary_metrics(scores, labels)
    assert m.sensitivity == pytest.approx(2 / 3)
    assert m.specificity == pytest.approx(2 / 3)
    assert m.accuracy == pytest.approx(4 / 6)
    assert m.n_pos == 3 and m.n_neg == 3
    # pairwise wins: 0.9 takes 3, 0.6 takes 2, 0.2 takes 1 of 9
    assert m.auc == pytest.approx(6 / 9)


def test_auc_separated_and_inverted():
    scores = np.array([0.9, 0.8, 0.7, 0.2, 0.1])
    labels = np.array([1, 1, 1, 0, 0])
    assert binary_metrics(scores, labels).auc == 1.0
    assert binary_metrics(scores, 1 - labels).auc == 0.0


def test_auc_ties_use_average_ranks():
    scores = np.array([0.5, 0.5, 0.5, 0.4, 0.6])
    labels = np.array([1, 0, 1, 0, 1])
    m = binary_metrics(scores, labels)
    assert m.auc == pytest.approx(auc_pair_oracle(scores, labels), abs=1e-12)


def test_auc_matches_pair_oracle_on_random_instances():
    rng = np.random.default_rng(12)
    for _ in range(50):
        n = int(rng.integers(4, 30))
        scores = np.round(rng.random(n), 1)  # coarse grid forces ties
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        m = binary_metrics(scores, labels)
        assert m.auc == pytest.approx(auc_pair_oracle(scores, labels), abs=1e-12)


def test_binary_metrics_single_class_has_no_auc():
    m = binary_metrics(np.array([0.9, 0.1]), np.array([1, 1]))
    assert m.auc is None
    assert m.specificity is None
    assert m.sensitivity == 0.5
    n = binary_metrics(np.array([0.9, 0.1]), np.array([0, 0]))
    assert n.sensitivity is None


def test_binary_metrics_validation():
    with pytest.raises(ShapeError):
        binary_metrics(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        binary_metrics(np.array([0.5]), np.array([2]))
    with pytest.raises(ShapeError):
        binary_metrics(np.array([]), np.array([]))


def test_reliability_measure_identity_is_zero():
    x = np.arange(5.0)
    assert reliability_measure(x, x.copy()) == (0.0, 0.0)


def test_reliability_measure_unit_offsets():
    mse, euc = reliability_measure(np.ones(4), np.zeros(4))
    assert mse == pytest.approx(1.0)
    assert euc == pytest.approx(2.0)


def test_reliability_measure_euclidean_squared_is_mse_times_dim():
    rng = np.random.default_rng(3)
    for _ in range(25):
        d = int(rng.integers(1, 12))
        x, y = rng.standard_normal(d), rng.standard_normal(d)
        mse, euc = reliability_measure(x, y)
        assert euc * euc == pytest.approx(mse * d, rel=1e-12)


def test_reliability_measure_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        reliability_measure(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        reliability_measure(np.zeros(3), np.zeros(4))


def test_reliability_report_verdicts():
    records = [
        rec("s0", "size", "av_to_q", 0.1, True),
        rec("s1", "size", "av_to_q", 0.2, True),
        rec("s2", "size", "av_to_q", 0.9, False),
        rec("s3", "edge", "av_to_q", 1.5, True),
        rec("s4", "edge", "av_to_q", 0.3, False),
    ]
    report = reliability_report(records)
    g = report.lookup("size", "av_to_q")
    assert g.n_correct == 2 and g.n_incorrect == 1
    assert g.mse_correct == pytest.approx(0.15)
    assert g.mse_incorrect == pytest.approx(0.9)
    assert g.verdict_mse is True
    assert g.verdict_euclidean is True
    bad = report.lookup("edge", "av_to_q")
    assert bad.verdict_mse is False
    assert report.verdict_counts("av_to_q", "mse") == (1, 2)


def test_reliability_report_all_correct_is_indeterminate():
    records = [rec(f"s{i}", "size", "aq_to_v", 0.1 * i, True) for i in range(4)]
    report = reliability_report(records)
    g = report.lookup("size", "aq_to_v")
    assert g.verdict_mse is None
    assert g.mse_incorrect is None
    assert g.as_row()["verdict_mse"] == "indeterminate"
    assert report.verdict_counts("aq_to_v", "mse") == (0, 0)


def test_reliability_report_group_means_match_flat_recompute():
    rng = np.random.default_rng(9)
    records = []
    for i in range(60):
        records.append(
            rec(
                f"s{i}",
                ("size", "edge")[int(rng.integers(2))],
                ("av_to_q", "aq_to_v")[int(rng.integers(2))],
                float(rng.random() + 0.01),
                bool(rng.integers(2)),
            )
        )
    report = reliability_report(records)
    for g in report.groups:
        pool = [
            r.mse
            for r in records
            if r.attribute == g.attribute and r.direction == g.direction and r.answer_correct
        ]
        want = float(np.mean(pool)) if pool else None
        if want is None:
            assert g.mse_correct is None
        else:
            assert g.mse_correct == pytest.approx(want, rel=1e-12)


def test_reliability_report_keeps_first_seen_order():
    records = [
        rec("s0", "edge", "aq_to_v", 0.1, True),
        rec("s1", "size", "av_to_q", 0.2, False),
        rec("s2", "edge", "av_to_q", 0.3, True),
    ]
    report = reliability_report(records)
    keys = [(g.attribute, g.direction) for g in report.groups]
    assert keys == [("edge", "aq_to_v"), ("size", "av_to_q"), ("edge", "av_to_q")]


def test_reliability_report_rejections():
    with pytest.raises(DataFormatError):
        reliability_report([])
    with pytest.raises(ConfigError):
        reliability_report([rec("s0", "size", "sideways", 0.1, True)])
    with pytest.raises(KeyError):
        reliability_report([rec("s0", "size", "av_to_q", 0.1, True)]).lookup(
            "size", "aq_to_v"
        )


def test_curve_tracker_rows_and_csv():
    tr = CurveTracker()
    for e in range(10):
        tr.add(e, {"av_to_q": (1.0 / (e + 1), 2.0 / (e + 1)), "aq_to_v": (3.0, 4.0)})
    assert len(tr.rows) == 10
    assert [r.epoch for r in tr.rows] == list(range(10))
    lines = tr.csv_lines()
    assert lines[0] == CurveTracker.HEADER
    assert lines[1] == "0,1.0,2.0,3.0,4.0"
    assert len(lines) == 11


def test_curve_tracker_rejects_out_of_order_epochs():
    tr = CurveTracker()
    tr.add(3, {"av_to_q": (1.0, 1.0), "aq_to_v": (1.0, 1.0)})
    with pytest.raises(ConfigError):
        tr.add(3, {"av_to_q": (1.0, 1.0), "aq_to_v": (1.0, 1.0)})
    with pytest.raises(ConfigError):
        tr.add(2, {"av_to_q": (1.0, 1.0), "aq_to_v": (1.0, 1.0)})


def test_curve_tracker_requires_both_directions():
    tr = CurveTracker()
    with pytest.raises(ConfigError):
        tr.add(0, {"av_to_q": (1.0, 1.0)})


def test_curve_tracker_write_csv_round_trips(tmp_path):
    tr = CurveTracker()
    tr.add(0, {"av_to_q": (0.125, 0.25), "aq_to_v": (0.5, 1.0)})
    path = tmp_path / "curve.csv"
    tr.write_csv(path)
    text = path.read_text().splitlines()
    assert text == tr.csv_lines()
