import math

import numpy as np
import pytest
from scipy import linalg

from lacekit import greens as g
from lacekit.lattice import Torus, build_kernel


def _dense_transition(kernel, torus):
    """Dense matrix of x -> y weights D(y - x) on the torus."""
    dv = kernel.on_torus(torus).values.ravel()
    coords = torus.coords().reshape(-1, torus.d)
    n = torus.volume
    P = np.zeros((n, n))
    for i, x in enumerate(coords):
        shifted = np.roll(kernel.on_torus(torus).values, tuple(x), axis=tuple(range(torus.d)))
        P[i] = shifted.ravel()
    assert np.allclose(P.sum(1), dv.sum())
    return P


def test_constants():
    assert g.a_d(3) == pytest.approx(3 / (2 * math.pi), rel=1e-14)
    assert g.a_d(5) == pytest.approx(5 / (4 * math.pi ** 2), rel=1e-14)
    with pytest.raises(g.GreensError):
        g.a_d(2)


@pytest.mark.parametrize("d,L,side,mu", [(1, 1, 9, 0.5), (2, 1, 6, 0.9), (2, 2, 7, 0.3)])
def test_subcritical_matches_dense_solve(d, L, side, mu):
    k = build_kernel("uniform", L=L, d=d)
    t = Torus(d, side)
    P = _dense_transition(k, t)
    S = linalg.solve(np.eye(t.volume) - mu * P, np.eye(t.volume)[0])
    res = g.greens_torus(k, mu, t)
    assert np.allclose(res.field.values.ravel(), S, rtol=1e-12, atol=1e-14)
    assert res.zero_mode_shift == 0.0
    assert g.sle_residual(res, k) < 1e-12


def test_mu_zero_is_delta_and_monotone():
    k = build_kernel("uniform", L=1, d=2)
    t = Torus(2, 8)
    assert g.greens_torus(k, 0, t).field[(0, 0)] == 1.0
    prev = None
    for mu in (0.1, 0.5, 0.9, 0.99):
        v = g.greens_torus(k, mu, t).field.values
        if prev is not None:
            assert np.all(v >= prev - 1e-15)
        prev = v


def test_rejections():
    k2 = build_kernel("uniform", L=1, d=2)
    k3 = build_kernel("uniform", L=1, d=3)
    with pytest.raises(g.GreensError):
        g.greens_torus(k2, 1, Torus(2, 8))
    with pytest.raises(g.GreensError):
        g.greens_torus(k3, 1.2, Torus(3, 8))
    with pytest.raises(g.GreensError):
        g.greens_torus(k3, 0.5, Torus(3, 8), image_correct=True)


def test_poisson_series_matches_matrix_exponential():
    k = build_kernel("uniform", L=1, d=2)
    t = Torus(2, 7)
    P = _dense_transition(k, t)
    for tt, mu in ((0.7, 1.0), (4.0, 0.6)):
        ref = linalg.expm(-tt * (np.eye(t.volume) - mu * P))[0]
        hs = g.poisson_kernel(k, tt, mu, t)
        assert np.allclose(hs.field.values.ravel(), ref, atol=1e-13)
        assert hs.tail_mass <= g.TAIL_MASS
        assert np.allclose(g.heat_kernel(k, tt, mu, t).field.values.ravel(), ref, atol=1e-13)


def test_poisson_truncation_error():
    k = build_kernel("uniform", L=1, d=1)
    with pytest.raises(g.TruncationError):
        g.poisson_kernel(k, 50.0, 1.0, Torus(1, 64), truncation=52)


def test_total_mass():
    k = build_kernel("uniform", L=1, d=2)
    hs = g.poisson_kernel(k, 5.0, 0.7, Torus(2, 41))
    assert hs.field.values.sum() == pytest.approx(math.exp(-5.0 * 0.3), rel=1e-10)


def test_t_integral_reproduces_greens():
    k = build_kernel("uniform", L=1, d=1)
    t = Torus(1, 32)
    ph = g.PointHeat(k, t, (0,), 0.5)
    ref = g.greens_torus(k, 0.5, t).field[(0,)]
    assert ph.integral_exact(0.0) == pytest.approx(ref, rel=1e-13)
    assert g.integrate_t(ph, 0.0, 80.0) == pytest.approx(ref, rel=1e-8)


def test_gaussian_tail_closed_form():
    for d in (3, 4, 5):
        x = (7,) + (0,) * (d - 1)
        full = g.gaussian_tail_integral(x, d, 2.0, 0.0)
        assert full == pytest.approx(g.a_d(d) / (2.0 * 7 ** (d - 2)), rel=1e-12)
        T = g.split_time(x, 2.0, d)
        assert g.gaussian_tail_integral(x, d, 2.0, T) == pytest.approx(
            g.gaussian_tail_quadrature(x, d, 2.0, T), rel=1e-8)


def test_split_sums_to_torus_value():
    k = build_kernel("uniform", L=1, d=3)
    t = Torus(3, 32)
    r = g.gaussian_split(k, (8, 0, 0), t)
    ref = g.greens_torus(k, 1, t).field[(8, 0, 0)]
    assert r["torus_total"] == pytest.approx(ref, rel=1e-7)
    assert r["S_less"] >= 0 and r["S_greater"] >= 0


@pytest.mark.parametrize("d,L", [(1, 1), (2, 1), (2, 2)])
def test_large_deviation_bounds(d, L):
    k = build_kernel("uniform", L=L, d=d)
    rng = np.random.default_rng(3)
    xs = [tuple(int(c) for c in rng.integers(-8, 9, d)) for _ in range(12)]
    r = g.large_deviation_check(k, np.geomspace(0.1, 10, 5), xs)
    assert r["ok"] and r["exact"]
    assert r["points"] == 60


@pytest.mark.parametrize("d,L,s", [(1, 1, 1.0), (2, 1, 0.5), (1, 2, 0.5)])
def test_moment_identity(d, L, s):
    k = build_kernel("uniform", L=L, d=d)
    assert g.mgf_check(k, 3.0, s)["rel_error"] < 1e-6
    with pytest.raises(g.GreensError):
        g.mgf_check(k, 1.0, 2.0 / L)


@pytest.mark.slow
def test_image_correction_side_independent():
    k = build_kernel("uniform", L=1, d=3)
    vals = []
    for side in (32, 64):
        res = g.greens_torus(k, 1, Torus(3, side), image_correct=True)
        vals.append(res.field[(6, 0, 0)])
    assert vals[0] == pytest.approx(vals[1], rel=2e-3)
