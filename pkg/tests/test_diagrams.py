import itertools
from fractions import Fraction

import numpy as np
import pytest

from lacekit import diagrams as dg
from lacekit import perc_exact as pe
from lacekit.enumerate import two_point_series
from lacekit.errors import GuardError
from lacekit.lattice import Torus, build_kernel, power_law_field

T1 = Torus(1, 5)
K1 = build_kernel("uniform", L=1, d=1)


def _pts(t):
    return [tuple(int(c) for c in x) for x in t.coords().reshape(-1, t.d)]


def _f(t, arr, x):
    return arr[t.index(x)]


def _sub(a, b):
    return tuple(i - j for i, j in zip(a, b))


def test_S_field_brute_force():
    t = Torus(2, 5)
    f1, f2 = power_law_field(t, 1.7).values, power_law_field(t, 1.2).values
    s = dg.S_field(f1, f2)
    P = _pts(t)
    for z in [(0, 0), (1, 2), (2, -1)]:
        ref = sum(_f(t, f2, a) * _f(t, f1, b) * _f(t, f1, _sub(_sub(z, a), b)) for a in P for b in P)
        assert _f(t, s, z) == pytest.approx(ref, rel=1e-12)


def test_T_row_and_H_brute_force():
    t = T1
    f1, f2 = power_law_field(t, 0.8).values, power_law_field(t, 0.5).values
    P = _pts(t)
    x = (2,)
    row = dg.T_row(f1, f2, t.index(x))
    for y in P:
        ref = sum((_f(t, f1, u) * _f(t, f2, v) + _f(t, f2, u) * _f(t, f1, v)) * _f(t, f1, _sub(u, v))
                  * _f(t, f2, _sub(y, u)) * _f(t, f1, _sub(x, v)) for u in P for v in P)
        assert _f(t, row, y) == pytest.approx(ref, rel=1e-12)
    z, w, xx, y = (1,), (-2,), (0,), (2,)
    ref = sum(_f(t, f1, _sub(z, u)) * _f(t, f1, _sub(y, u)) * _f(t, f1, _sub(w, v)) * _f(t, f1, _sub(xx, v))
              * _f(t, f1, _sub(u, v)) for u in P for v in P)
    hv = dg.H_value(f1, t.index(z), t.index(w), t.index(xx), t.index(y))
    assert hv == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("model,which,names", [
    ("SAW", "i", ["A"]), ("LT", "i", ["A"]), ("LA", "i", ["A"]),
    ("PERC", "i", ["A1", "A2"]), ("PERC", "end", ["Aend"])])
def test_apply_kernel_matches_direct_sums(model, which, names):
    spec = dg.power_law_spec(model, T1, 0.9, K1, 0.7)
    rng = np.random.default_rng(0)
    M = rng.random(T1.shape * 2)
    out = dg.apply_kernel(spec, M, which)
    P = _pts(T1)
    for x, y in [((0,), (1,)), ((2,), (-1,)), ((1,), (1,))]:
        ref = sum(M[T1.index(u) + T1.index(v)] * sum(dg.direct_kernel_value(spec, n, u, v, x, y) for n in names)
                  for u in P for v in P)
        assert out[T1.index(x) + T1.index(y)] == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("model", ["LT", "LA", "PERC"])
def test_A0_matches_direct(model):
    spec = dg.power_law_spec(model, T1, 0.9, K1, 0.7)
    A0 = dg.kernel_A0(spec)
    for x, y in itertools.product(_pts(T1), repeat=2):
        assert A0[T1.index(x) + T1.index(y)] == pytest.approx(dg.direct_kernel_value(spec, "A0", x, y), rel=1e-10)


def test_regime_and_guards():
    with pytest.raises(dg.RegimeError):
        dg.check_regime(1.0, 1.0, 3)
    dg.check_regime(2.5, 2.0, 3)
    with pytest.raises(GuardError):
        dg.m_diagonals(dg.power_law_spec("SAW", Torus(3, 20), 2.0), 3)


def test_condition_sums_of_delta():
    t = Torus(2, 16)
    v = np.zeros(t.shape)
    v[0, 0] = 1.0
    r = dg.condition_sums(power_law_field(t, 2.0).with_values(v, "delta"))
    assert r["bubble_value"] == r["triangle_value"] == r["square_value"] == 1.0


def test_power_law_sums_converge_above_threshold():
    r = dg.condition_sums_power_law(2.9, 3, 32)
    assert all(r["diagnostics"][k]["converging"] for k in ("bubble", "triangle", "square"))


def test_saw_series_diagonal_matches_float_recursion():
    k = build_kernel("uniform", L=1, d=1)
    sigma = two_point_series("SAW", k, 5)
    p = Fraction(1, 100)
    t = Torus(1, 32)
    spec = dg.KernelSpec("SAW", {"sigma": dg.LineField(sigma.to_field(t, float(p)))})
    for n in (2, 3):
        ex = dg.saw_M_series(sigma, n)
        fl = dg.m_diagonals(spec, n)[n]
        # the float recursion keeps orders above the truncation, which are O(p^6)
        for x, poly in ex.items():
            assert float(poly(p)) == pytest.approx(fl[t.index(x)], abs=1e-10)


def test_lt_la_domination_small():
    assert dg.lt_la_domination("LA", K1, 4, Fraction(1, 2))["ok"]
    assert dg.lt_la_domination("LT", K1, 4, Fraction(1, 2))["ok"]


def test_perc_graph_domination_small():
    assert dg.perc_graph_domination(pe.parallel_paths(Fraction(1, 2)), 1)["ok"]
