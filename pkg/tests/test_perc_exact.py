from fractions import Fraction

import networkx as nx
import pytest

from lacekit import perc_exact as pe
from lacekit.errors import GuardError
from lacekit.series import ActivityPoly

P = [Fraction(1, 5), Fraction(1, 2), Fraction(9, 10)]


def _brute(g, p):
    """Exact tau(origin, .) and double-connection probabilities by enumeration."""
    tau = [Fraction(0)] * g.ns
    dbl = [Fraction(0)] * g.ns
    for bits in range(1 << g.nb):
        w = Fraction(1)
        G = nx.Graph()
        G.add_nodes_from(range(g.ns))
        for i, (a, b, wt) in enumerate(g.bonds):
            q = p * wt
            if (bits >> i) & 1:
                w *= q
                G.add_edge(a, b)
            else:
                w *= 1 - q
        comp = nx.node_connected_component(G, g.origin)
        for x in comp:
            tau[x] += w
            if x != g.origin and nx.edge_connectivity(G, g.origin, x) >= 2:
                dbl[x] += w
    return tau, dbl


GRAPHS = {
    "bond": pe.single_bond(),
    "path": pe.path_graph(4, Fraction(1, 2)),
    "cycle": pe.cycle_graph(5, Fraction(1, 3)),
    "parallel": pe.parallel_paths(Fraction(1, 2)),
    "line": pe.line_graph(4, 2),
}


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_two_point_and_psi0_match_enumeration(name):
    g = GRAPHS[name]
    tau = pe.two_point_all(g, g.origin)
    psi0 = pe.psi0_all(g)
    for p in P:
        bt, bd = _brute(g, p)
        assert [t(p) for t in tau] == bt
        assert [s(p) for s in psi0] == bd


def test_parallel_closed_form():
    g = pe.parallel_paths(Fraction(1, 2))
    tau = pe.exact_two_point(g, 0, 1)
    psi0 = pe.exact_psi0(g, 1)
    assert tau == ActivityPoly([0, 0, Fraction(1, 2), 0, Fraction(-1, 16)], tau.max_order)
    assert psi0 == ActivityPoly([0, 0, 0, 0, Fraction(1, 16)], psi0.max_order)


def test_single_bond_has_no_double_connection():
    g = pe.single_bond()
    assert pe.exact_psi0(g, 1).is_zero()
    assert pe.exact_two_point(g, 0, 1) == ActivityPoly([0, Fraction(1, 3)], 1)


@pytest.mark.parametrize("N", [0, 1, 2])
def test_identity_on_small_graphs(N):
    for name in ("bond", "path", "parallel", "line"):
        r = pe.verify_perc_expansion(GRAPHS[name], N=N)
        assert r.ok, (name, r.first_mismatch)


def test_psi_n_nonnegative():
    g = GRAPHS["line"]
    for n in (1, 2):
        for s in pe.psi_n_all(g, n):
            for p in P:
                assert s(p) >= 0


def test_restricted_plus_through_is_total():
    g = GRAPHS["cycle"]
    A = [2]
    for x in range(g.ns):
        tot = pe.exact_two_point(g, 0, x)
        r, t = pe.restricted_two_point(g, A, 0, x), pe.through_two_point(g, A, 0, x)
        assert all(tot(p) == r(p) + t(p) for p in P)


def test_bridge_test_agrees_with_maxflow():
    g = GRAPHS["parallel"]
    for bits in range(1 << g.nb):
        flow = pe.double_connected_maxflow(g, bits, 1)
        both = bits == 0b1111
        assert flow == both


def test_pivotal_analysis_on_path():
    g = pe.path_graph(4)
    rep = pe.pivotal_analysis(g, pe.BondConfig(0b111, 3), 0, 3, A=[0])
    assert rep["pivotal"] == [(0, 1), (1, 2), (2, 3)]
    assert rep["through"] and rep["event_E"] is False


def test_guards():
    with pytest.raises(GuardError):
        pe.verify_perc_expansion(pe.box_graph(3), N=1, budget=10**6)
    with pytest.raises(GuardError):
        pe.FiniteGraph([(i,) for i in range(31)], [])
    with pytest.raises(ValueError):
        pe.FiniteGraph([(0,), (1,)], [(0, 1, 1), (1, 0, 1)])
