import itertools
from fractions import Fraction

import pytest

from lacekit import enumerate as en
from lacekit.errors import GuardError
from lacekit.lattice import build_kernel
from lacekit.series import ActivityPoly


def _king_saw_counts(n_max):
    """Self-avoiding walk counts on Z^2 with the 8 king moves (brute force)."""
    steps = [e for e in itertools.product((-1, 0, 1), repeat=2) if any(e)]
    counts = [0] * (n_max + 1)

    def rec(path, seen):
        counts[len(path) - 1] += 1
        if len(path) - 1 == n_max:
            return
        x = path[-1]
        for e in steps:
            y = (x[0] + e[0], x[1] + e[1])
            if y not in seen:
                seen.add(y)
                path.append(y)
                rec(path, seen)
                path.pop()
                seen.discard(y)

    rec([(0, 0)], {(0, 0)})
    return counts


def _king_polygons(n):
    """Closed walks 0 -> 0 of n >= 2 king steps, otherwise self-avoiding."""
    steps = [e for e in itertools.product((-1, 0, 1), repeat=2) if any(e)]
    total = 0

    def rec(path, seen):
        nonlocal total
        x = path[-1]
        left = n - (len(path) - 1)
        for e in steps:
            y = (x[0] + e[0], x[1] + e[1])
            if left == 1:
                total += y == (0, 0)
            elif y not in seen:
                seen.add(y)
                path.append(y)
                rec(path, seen)
                path.pop()
                seen.discard(y)

    rec([(0, 0)], {(0, 0)})
    return total


K21 = build_kernel("uniform", 1, 2)


def test_saw_susceptibility_matches_brute_force():
    counts = _king_saw_counts(5)
    chi = en.two_point_series("SAW", K21, 5).total()
    assert counts[:4] == [1, 8, 56, 368]
    assert [chi[n] for n in range(6)] == [Fraction(c, 9 ** n) for n, c in enumerate(counts)]


def test_rw_mass():
    s = en.two_point_series("RW", K21, 4)
    assert s.total() == ActivityPoly([1] * 5, 4)


def test_lattice_trees_on_a_line():
    # trees on Z with nearest-neighbour bonds are intervals: (n+1) of them contain 0
    k = build_kernel("uniform", 1, 1)
    for model in ("LT", "LA"):
        rho0 = en.two_point_series(model, k, 5)[(0,)]
        assert [rho0[n] for n in range(6)] == [Fraction(n + 1, 3 ** n) for n in range(6)]


def test_psi1_is_polygon_weight():
    psi1 = en.psi_series("SAW", K21, 1, 5)
    c = psi1[(0, 0)]
    # order 1 is the zero step of weight D(0)
    assert c[1] == Fraction(1, 9)
    for n in range(2, 6):
        assert c[n] == Fraction(_king_polygons(n), 9 ** n)
    assert all(x == (0, 0) for x in psi1.entries)


def test_identity_small_orders_all_models():
    assert en.verify_expansion_identity("SAW", K21, 4).ok
    assert en.verify_expansion_identity("RW", K21, 4).ok
    assert en.verify_expansion_identity("LT", build_kernel("uniform", 1, 1), 4).ok
    assert en.verify_expansion_identity("LA", build_kernel("uniform", 1, 1), 4).ok


def test_identity_detects_corruption():
    U = en.two_point_series("SAW", K21, 3)
    bad = dict(U.entries)
    bad[(1, 0)] = bad[(1, 0)] + ActivityPoly.monomial(2, 1, 3)
    U2 = type(U)(U.kernel, U.model, U.max_order, U.radius, bad)
    r = en.verify_expansion_identity("SAW", K21, 3, U=U2)
    assert not r.ok
    assert r.per_order[0] and r.per_order[1] and not r.per_order[2]


def test_guard():
    with pytest.raises(GuardError):
        en.two_point_series("SAW", build_kernel("uniform", 3, 3), 8)


def test_moment_cancellation_exact():
    pz = en.pi_z_series("SAW", K21, 5)
    for z in (Fraction(1, 20), Fraction(1, 10)):
        c = en.build_expansion_coefficients("SAW", K21, pz, z)
        assert c.moment_sums() == (0, 0)


def test_rw_root_is_one():
    assert en.critical_estimate("RW", K21, 4)["zc_root_exact"] == 1


def test_pi_decomposition():
    r = en.pi_decomposition_check(K21, 4)
    assert r["ok"]
    assert r["checks"]["pi1_bound_zero_step"]["ok"]
