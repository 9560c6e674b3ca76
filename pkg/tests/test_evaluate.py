import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from showbook.errors import LengthMismatch, SingleClass
from showbook.evaluate import (
    ConfusionMatrix,
    auc,
    auc_band,
    comparison_table,
    confusion,
    evaluate,
    roc_curve,
)


def pair_count_auc(scores, labels):
    """Brute-force oracle: concordant pairs plus half the ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def polyline_area(points):
    return sum((x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in zip(points, points[1:]))


def test_confusion_reference_rates():
    cm = ConfusionMatrix(tp=685, fp=124, tn=876, fn=315, threshold=0.5)
    assert cm.accuracy == pytest.approx(0.7805)
    assert cm.hit_rate == pytest.approx(0.685)
    assert cm.specificity == pytest.approx(0.876)


def test_confusion_exact_scores():
    y = [1, 0, 1, 1, 0]
    cm = confusion(y, y, 0.5)
    assert cm.fp == cm.fn == 0 and cm.accuracy == 1.0


def test_confusion_threshold_boundaries():
    s = [0.0, 0.2, 0.7, 1.0]
    y = [0, 1, 0, 1]
    low = confusion(s, y, 0.0)
    assert low.tn == 0 and low.fn == 0 and low.tp == 2 and low.fp == 2
    high = confusion(s, y, 1.0)
    assert high.tp == 1 and high.fp == 0  # a score equal to the threshold is an event
    assert confusion([0.5], [1], 0.5).tp == 1


def test_confusion_rates_undefined_without_class():
    cm = confusion([0.9, 0.8], [1, 1])
    assert math.isnan(cm.specificity) and cm.hit_rate == 1.0


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        confusion([0.1, 0.2], [1])
    with pytest.raises(LengthMismatch):
        auc([0.1], [1, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=60), st.data())
def test_confusion_monotone_in_threshold(scores, data):
    y = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
    t1, t2 = sorted(data.draw(st.lists(st.floats(0, 1), min_size=2, max_size=2)))
    a, b = confusion(scores, y, t1), confusion(scores, y, t2)
    assert b.tp <= a.tp and b.tn >= a.tn
    for cm in (a, b):
        assert cm.total == len(scores)
        for r in (cm.accuracy, cm.hit_rate, cm.specificity):
            assert math.isnan(r) or 0 <= r <= 1


@pytest.mark.parametrize(
    "scores, labels, expected",
    [
        ([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0], 1.0),
        ([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0], 0.5),
        ([0.8, 0.7, 0.4, 0.3], [1, 0, 1, 0], 0.75),
    ],
)
def test_auc_examples(scores, labels, expected):
    assert auc(scores, labels) == expected
    assert pair_count_auc(scores, labels) == expected


def test_roc_perfect_contains_corner():
    pts = roc_curve([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]).points
    assert (0.0, 1.0) in pts and pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)


def test_roc_all_tied():
    roc = roc_curve([0.3] * 6, [1, 0, 1, 0, 0, 1])
    assert roc.points == [(0.0, 0.0), (1.0, 1.0)]
    assert roc.area() == 0.5


def test_roc_random_50_rows():
    rng = np.random.default_rng(50)
    s = np.round(rng.random(50), 1)
    y = rng.integers(0, 2, 50)
    roc = roc_curve(s, y)
    assert abs(polyline_area(roc.points) - pair_count_auc(s, y)) <= 1e-12
    assert len(roc.points) == len(np.unique(s)) + 1
    assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 100), st.integers(0, 2**32 - 1))
def test_auc_equals_pair_count(n, seed):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 8, n) / 7  # coarse grid forces ties
    y = rng.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    assert abs(auc(s, y) - pair_count_auc(s, y)) <= 1e-12
    assert abs(auc(s, y) - roc_auc_score(y, s)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 80), st.integers(0, 2**32 - 1))
def test_auc_rank_invariance_and_label_swap(n, seed):
    rng = np.random.default_rng(seed)
    s = rng.random(n)
    y = rng.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    a = auc(s, y)
    assert auc(np.exp(3 * s) - 7, y) == pytest.approx(a, abs=1e-12)
    assert auc(-s, y) == pytest.approx(1 - a, abs=1e-12)
    assert auc(s, 1 - y) == pytest.approx(1 - a, abs=1e-12)


def test_single_class_errors():
    with pytest.raises(SingleClass):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(SingleClass):
        roc_curve([0.1, 0.2], [0, 0])


@pytest.mark.parametrize(
    "value, band",
    [(0.85, "excellent"), (0.95, "outstanding"), (0.49, "poor"), (0.5, "below-acceptable"),
     (0.7, "acceptable"), (0.8, "excellent"), (0.9, "outstanding")],
)
def test_auc_band(value, band):
    assert auc_band(value) == band


def test_auc_band_range():
    with pytest.raises(ValueError):
        auc_band(1.2)


def test_report_and_table():
    rep = evaluate([0.9, 0.6, 0.4, 0.2, 0.7], [1, 1, 0, 0, 0])
    d = rep.to_dict()
    assert d["auc"] == rep.auc and d["accuracy"] == rep.accuracy
    assert d["display"]["accuracy"] == f"{100 * rep.accuracy:.1f}%"
    text = comparison_table("T", [("A", d, None), ("B", None, "MissingValues: x")])
    assert "AUC band" in text and "FAILED" in text and "B failed: MissingValues" in text
    csv_text = rep.roc.to_csv().splitlines()
    assert csv_text[0] == "threshold,fpr,tpr" and csv_text[-1].endswith(",1.0,1.0")
