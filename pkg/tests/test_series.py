from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lacekit.lattice import Torus, build_kernel
from lacekit.series import ActivityPoly, SiteSeries

fr = st.fractions(min_value=-5, max_value=5, max_denominator=20)


@settings(max_examples=40, deadline=None)
@given(st.lists(fr, min_size=1, max_size=6), st.lists(fr, min_size=1, max_size=6), fr)
def test_product_evaluates_pointwise(a, b, p):
    m = 10
    A, B = ActivityPoly(a, m), ActivityPoly(b, m)
    assert (A * B)(p) == A(p) * B(p)
    assert (A + B)(p) == A(p) + B(p)


@settings(max_examples=30, deadline=None)
@given(st.lists(fr, min_size=1, max_size=6))
def test_inverse(a):
    m = 6
    A = ActivityPoly([Fraction(1)] + a, m)
    assert A * A.inverse() == ActivityPoly.one(m)


@settings(max_examples=30, deadline=None)
@given(st.lists(fr, min_size=1, max_size=5))
def test_reversion(a):
    m = 6
    A = ActivityPoly([0, 1] + a, m)
    assert A.compose(A.reversion()) == ActivityPoly([0, 1], m)


def test_truncation_rules():
    A = ActivityPoly([1, 2, 3], 5)
    B = ActivityPoly([1, 1], 2)
    assert (A * B).max_order == 2
    assert A.shift(2) == ActivityPoly([0, 0, 1, 2, 3], 5)


def test_strings_roundtrip():
    A = ActivityPoly([Fraction(1, 3), -2, Fraction(7, 9)], 4)
    assert ActivityPoly.from_strings(A.to_strings(), 4) == A


def test_site_series_step_and_json(tmp_path):
    k = build_kernel("uniform", 1, 1)
    s = SiteSeries(k, "X", 3, 3, {(0,): ActivityPoly.one(3)})
    t = s.step()
    assert t[(1,)] == ActivityPoly([0, Fraction(1, 3)], 3)
    assert t.total() == ActivityPoly([0, 1], 3)
    s.save(tmp_path / "s.json")
    assert SiteSeries.from_json(tmp_path / "s.json")[(0,)] == ActivityPoly.one(3)


def test_to_field_rejects_small_torus():
    k = build_kernel("uniform", 1, 1)
    s = SiteSeries(k, "X", 2, 2, {(2,): ActivityPoly.one(2)})
    with pytest.raises(ValueError):
        s.to_field(Torus(1, 4), 0.1)
