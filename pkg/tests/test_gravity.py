import math

import pytest
from hypothesis import assume, given, strategies as st

from gravitykg.errors import DomainError, SingularDistance
from gravitykg.gravity import GravityParams, gravity_score, load_scores_csv, score_all_pairs, write_scores_csv
from gravitykg.model import EntityRegistry, TradeRecord

pos = st.floats(min_value=1e-3, max_value=1e6, allow_nan=False, allow_infinity=False)


def test_unit_example():
    assert gravity_score(2, 3, 6, 1) == 1.0


def test_zero_distance_is_singular():
    with pytest.raises(SingularDistance):
        gravity_score(1, 1, 0, 1)


@pytest.mark.parametrize("args", [(-1, 1, 1), (1, 0, 1), (1, 1, -2)])
def test_non_positive_inputs(args):
    with pytest.raises(DomainError):
        gravity_score(*args)


@given(pos, pos, pos, pos)
def test_symmetry(a, b, d, g):
    assert gravity_score(a, b, d, g) == gravity_score(b, a, d, g)


@given(pos, pos, pos, st.floats(min_value=0.01, max_value=100))
def test_mass_scale_law(a, b, d, c):
    base = gravity_score(a, b, d)
    assert gravity_score(c * a, c * b, d) == pytest.approx(c * c * base, rel=1e-12)


@given(pos, pos, pos, st.floats(min_value=1.001, max_value=10))
def test_monotone(a, b, d, f):
    s = gravity_score(a, b, d)
    assert gravity_score(a * f, b, d) > s
    assert gravity_score(a, b, d * f) < s


def test_distance_exponent():
    assert gravity_score(2, 2, 2, distance_exponent=2) == 1.0


def _rec(reg, y, a, b, ga, gb, d, m=1):
    return TradeRecord(y, m, reg.intern(a), reg.intern(b), "010101", 1.0, ga, gb, d)


def test_two_countries_one_score():
    reg = EntityRegistry()
    recs = [_rec(reg, 2019, "A", "B", 4, 9, 6, m) for m in (1, 2, 3)]
    scores = score_all_pairs(recs)
    assert len(scores) == 1
    assert scores[0].score == gravity_score(4, 9, 6)
    assert scores[0].score == 6.0


def test_three_countries_three_pairs():
    reg = EntityRegistry()
    recs = [_rec(reg, 2019, "A", "B", 1, 2, 1), _rec(reg, 2019, "B", "C", 2, 3, 1),
            _rec(reg, 2019, "C", "A", 3, 1, 1)]
    scores = score_all_pairs(recs)
    assert len(scores) == 3
    assert {tuple(e.label for e in s.pair) for s in scores} == {("A", "B"), ("B", "C"), ("A", "C")}


def test_year_mean_gdp():
    reg = EntityRegistry()
    # A reports GDP 2 then 4 in the same year; mean 3
    recs = [_rec(reg, 2019, "A", "B", 2, 5, 1, 1), _rec(reg, 2019, "A", "B", 4, 5, 1, 2)]
    assert score_all_pairs(recs)[0].score == pytest.approx(15.0)


def test_constant_g_scales_scores():
    reg = EntityRegistry()
    recs = [_rec(reg, 2019, "A", "B", 4, 9, 6)]
    assert score_all_pairs(recs, GravityParams(constant_G=10))[0].score == pytest.approx(60.0)


def test_scores_csv_roundtrip(tmp_path):
    reg = EntityRegistry()
    recs = [_rec(reg, 2019, "A", "B", 4, 9, 7), _rec(reg, 2020, "B", "C", 1.5, 3.25, 0.7)]
    scores = score_all_pairs(recs)
    write_scores_csv(scores, tmp_path / "s.csv")
    back = load_scores_csv(tmp_path / "s.csv")
    assert [(s.year, s.pair[0].label, s.pair[1].label, s.score) for s in back] == \
           [(s.year, s.pair[0].label, s.pair[1].label, s.score) for s in scores]
