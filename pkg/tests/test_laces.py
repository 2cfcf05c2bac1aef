import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lacekit.laces import (IntervalGraph, Lace, UMatrix, compatible_edges, enumerate_laces, evaluate_J,
                           evaluate_K, is_connected, J_graph_expansion, K_graph_expansion, lace_of,
                           selfcheck, verify_JK)


def test_connectivity_relaxed_intervals():
    assert is_connected(IntervalGraph(0, 3, [(0, 2), (1, 3)]))
    assert is_connected(IntervalGraph(0, 3, [(0, 3)]))
    assert not is_connected(IntervalGraph(0, 3, [(0, 1), (2, 3)]))


def test_lace_of_single_edge():
    lace = lace_of(IntervalGraph(0, 4, [(0, 4), (1, 2)]))
    assert lace.edges == ((0, 4),)


def test_lace_prescription():
    # the first edge reaches furthest from 0, then from its interior
    lace = lace_of(IntervalGraph(0, 5, [(0, 2), (0, 3), (1, 4), (2, 5), (3, 5)]))
    assert lace.edges == ((0, 3), (2, 5))


def test_lace_counts():
    for n in range(1, 7):
        assert len(enumerate_laces((0, n), 1)) == 1
    assert len(enumerate_laces((0, 3), 2)) == 3
    assert enumerate_laces((0, 0), 1) == []


def test_lace_is_fixed_point():
    for N in (1, 2, 3):
        for lace in enumerate_laces((0, 5), N):
            assert lace_of(lace.graph) == lace
            assert is_connected(lace.graph)


def test_compatible_edges_do_not_change_lace():
    for lace in enumerate_laces((0, 4), 2):
        for e in compatible_edges(lace):
            g = IntervalGraph(0, 4, set(lace.edges) | {e})
            assert lace_of(g) == lace


def test_abuttal():
    assert Lace(0, 4, ((0, 2), (2, 4))).has_abuttal()
    assert not Lace(0, 4, ((0, 2), (1, 4))).has_abuttal()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_JK_identity_exact(b, seed):
    u = UMatrix.random(b, random.Random(seed), exact=True)
    assert verify_JK(u, b).ok


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_JK_identity_float(b, seed):
    u = UMatrix.random(b, random.Random(seed))
    assert verify_JK(u, b, tol=1e-12).ok


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_K_and_J_match_graph_sums(b, seed):
    u = UMatrix.random(b, random.Random(seed), exact=True)
    assert evaluate_K(u, (0, b)) == K_graph_expansion(u, (0, b))
    assert evaluate_J(u, (0, b)) == J_graph_expansion(u, (0, b))


def test_K_all_zero_interactions():
    u = UMatrix(0, 3, {})
    assert evaluate_K(u, (0, 3)) == 1
    assert evaluate_J(u, (0, 3)) == 0


def test_umatrix_range_check():
    with pytest.raises(ValueError):
        UMatrix(0, 2, {(0, 1): Fraction(1, 2)})


def test_selfcheck_small():
    r = selfcheck(max_b=5, trials=60, seed=3)
    assert r["ok"] and r["lace_counts"]["L2_0_3"] == 3
