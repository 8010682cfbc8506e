import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from gravitykg.errors import ShapeError
from gravitykg.evaluation import ConfusionMatrix, confusion, regression_metrics

# millesimal grid keeps squared deviations clear of underflow
vals = st.lists(st.integers(-10 ** 6, 10 ** 6).map(lambda v: v / 1000), min_size=2, max_size=30)


def test_mae_example():
    assert regression_metrics([1, 5], [2, 4]).mae == 1.0


def test_perfect_fit():
    m = regression_metrics([1, 2, 3], [1, 2, 3])
    assert (m.mae, m.mape, m.mpe, m.r_square) == (0.0, 0.0, 0.0, 1.0)


def test_mean_predictor_r2_zero():
    assert regression_metrics([1, 2, 3], [2, 2, 2]).r_square == 0.0


def test_hand_computed():
    # errors y - yhat = [-1, 1, -1, 2]
    m = regression_metrics([1, 2, 4, 8], [2, 1, 5, 6])
    assert m.mae == 1.25
    assert m.mape == pytest.approx(100 * (1 + 0.5 + 0.25 + 0.25) / 4)
    assert m.mpe == pytest.approx(100 * (-1 + 0.5 - 0.25 + 0.25) / 4)
    assert m.r_square == pytest.approx(1 - 7 / 28.75)


def test_matches_textbook_loops():
    rng = np.random.default_rng(4)
    y = rng.uniform(1, 10, 50)
    p = y + rng.normal(0, 1, 50)
    m = regression_metrics(y, p)
    assert (m.mae, m.mape, m.mpe, m.r_square) == pytest.approx(oracles.regression(list(y), list(p)), rel=1e-12)


def test_zero_actuals_skipped():
    m = regression_metrics([0, 2], [1, 1])
    assert m.skipped_zero_actual == 1
    assert m.mape == 50.0 and m.mpe == 50.0


def test_all_zero_actuals():
    m = regression_metrics([0, 0], [1, 1])
    assert math.isnan(m.mape) and math.isnan(m.mpe)
    assert m.to_dict()["mape"] is None


def test_constant_actual_imperfect():
    assert regression_metrics([2, 2], [2, 3]).r_square == -math.inf


def test_near_zero_actuals_explode_mape():
    y = np.array([1e-6] * 10 + [1.0] * 10)
    p = y + 0.5
    m = regression_metrics(y, p)
    assert m.mae < 1
    assert m.mape > 1e4
    assert m.mpe == pytest.approx(-m.mape)


def test_length_mismatch():
    with pytest.raises(ShapeError):
        regression_metrics([1, 2], [1])


@given(vals, st.floats(-1e3, 1e3))
def test_mae_translation_invariant(y, c):
    rng = np.random.default_rng(len(y))
    p = np.array(y) + rng.normal(0, 1, len(y))
    a = regression_metrics(y, p).mae
    b = regression_metrics(np.array(y) + c, p + c).mae
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@given(vals, st.floats(1e-3, 10))
def test_worse_than_mean_is_negative(y, shift):
    y = np.array(y)
    if np.ptp(y) == 0:
        return
    assert regression_metrics(y, np.full(y.size, y.mean())).r_square == pytest.approx(0.0, abs=1e-12)
    assert regression_metrics(y, np.full(y.size, y.mean() + shift * y.std())).r_square < 0


def test_confusion_example():
    cm = confusion([1, 0], [0.9, 0.1], 0.5)
    assert (cm.tp, cm.tn, cm.fp, cm.fn) == (1, 1, 0, 0)
    assert cm.accuracy == 1.0


def test_all_positive_predictions():
    cm = confusion([1, 0, 1, 0], [0.9] * 4)
    assert cm.fp_rate == 100 and cm.tp_rate == 100


def test_threshold_above_scores():
    cm = confusion([1, 0, 1], [0.2, 0.3, 0.4], threshold=0.9)
    assert cm.tp == 0 and cm.fp == 0


def test_threshold_inclusive():
    assert confusion([1], [0.5], 0.5).tp == 1


def test_bad_labels():
    with pytest.raises(ValueError):
        confusion([2], [0.5])


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_rate_identities(tp, fp, fn, tn):
    cm = ConfusionMatrix(tp, fp, fn, tn)
    if tp + fn:
        assert cm.tp_rate + cm.fn_rate == pytest.approx(100)
    if fp + tn:
        assert cm.fp_rate + cm.tn_rate == pytest.approx(100)
    if cm.total:
        assert cm.accuracy == (tp + tn) / (tp + fp + fn + tn)
