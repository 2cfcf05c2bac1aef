"""Interval graphs, laces, compatible edges and the K/J algebra.

Connectivity is the relaxed interval notion: a graph on [a, b] is
connected when the closed intervals [s, t] of its edges cover [a, b], so
edges 01 and 12 already connect [0, 2].
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

Edge = tuple


def _edge(s, t) -> Edge:
    s, t = int(s), int(t)
    if s == t:
        raise ValueError("self-edges are not allowed")
    return (s, t) if s < t else (t, s)


@dataclass(frozen=True)
class IntervalGraph:
    """Edge set on the integer interval [a, b]."""

    a: int
    b: int
    edges: frozenset

    def __init__(self, a: int, b: int, edges: Iterable = ()):
        if a > b:
            raise ValueError("interval needs a <= b")
        es = frozenset(_edge(*e) for e in edges)
        for s, t in es:
            if s < a or t > b:
                raise ValueError(f"edge {(s, t)} lies outside [{a}, {b}]")
        object.__setattr__(self, "a", int(a))
        object.__setattr__(self, "b", int(b))
        object.__setattr__(self, "edges", es)


@dataclass(frozen=True)
class Lace:
    """Minimally connected graph; ``edges`` in prescription order."""

    a: int
    b: int
    edges: tuple

    @property
    def graph(self) -> IntervalGraph:
        return IntervalGraph(self.a, self.b, self.edges)

    def __len__(self):
        return len(self.edges)

    def has_abuttal(self) -> bool:
        """True if two consecutive edges meet at a single point (t_i = s_{i+1})."""
        return any(self.edges[i][1] == self.edges[i + 1][0] for i in range(len(self.edges) - 1))


def _covers(a: int, b: int, edges) -> bool:
    if a >= b:
        return False
    reach = a
    for s, t in sorted(edges):
        if s > reach:
            return False
        reach = max(reach, t)
        if reach >= b:
            return True
    return reach >= b


def is_connected(g: IntervalGraph) -> bool:
    """True iff the closed edge intervals cover [a, b] (false for a = b)."""
    return _covers(g.a, g.b, g.edges)


def _extract(a: int, b: int, edges) -> tuple:
    es = list(edges)
    t_prev = max(t for s, t in es if s == a) if any(s == a for s, _ in es) else None
    if t_prev is None:
        raise ValueError("graph is not connected")
    out = [(a, t_prev)]
    while t_prev < b:
        t_new = max(t for s, t in es if s <= t_prev)
        if t_new <= t_prev:
            raise ValueError("graph is not connected")
        s_new = min(s for s, t in es if t == t_new)
        out.append((s_new, t_new))
        t_prev = t_new
    return tuple(out)


def lace_of(g: IntervalGraph) -> Lace:
    """The lace L_Gamma of a connected graph via the s_i / t_i prescription."""
    if not is_connected(g):
        raise ValueError("lace_of needs a connected graph")
    return Lace(g.a, g.b, _extract(g.a, g.b, g.edges))


@lru_cache(maxsize=None)
def _compatible(n: int, lace_edges: tuple) -> frozenset:
    out = []
    base = set(lace_edges)
    for s in range(n + 1):
        for t in range(s + 1, n + 1):
            if (s, t) in base:
                continue
            if _extract(0, n, base | {(s, t)}) == lace_edges:
                out.append((s, t))
    return frozenset(out)


def compatible_edges(l: Lace) -> frozenset:
    """Edges st not in L with lace_of(L + st) = L."""
    shifted = tuple((s - l.a, t - l.a) for s, t in l.edges)
    return frozenset((s + l.a, t + l.a) for s, t in _compatible(l.b - l.a, shifted))


def _is_minimal(a, b, edges) -> bool:
    return all(not _covers(a, b, [e for e in edges if e != f]) for f in edges)


@lru_cache(maxsize=None)
def _laces_from_zero(n: int, N: int | None) -> tuple:
    """All laces on [0, n] (with exactly N edges when N is given)."""
    found = []

    def grow(edges, s_last, t_last):
        if t_last == n:
            if (N is None or len(edges) == N) and _is_minimal(0, n, edges):
                found.append(tuple(edges))
            return
        if N is not None and len(edges) >= N:
            return
        for s in range(s_last + 1, t_last + 1):
            # minimality: the new edge must start after the end of the edge before last
            if len(edges) >= 2 and s <= edges[-2][1]:
                continue
            for t in range(t_last + 1, n + 1):
                grow(edges + [(s, t)], s, t)

    for t1 in range(1, n + 1):
        grow([(0, t1)], 0, t1)
    return tuple(sorted(found))


def enumerate_laces(interval, N: int) -> list:
    """All laces on ``interval = (a, b)`` with exactly N edges."""
    a, b = interval
    if N < 1:
        raise ValueError("N must be >= 1")
    if b <= a:
        return []
    return [Lace(a, b, tuple((s + a, t + a) for s, t in es)) for es in _laces_from_zero(b - a, N)]


class UMatrix:
    """Pair-indexed interaction values U_st in [-1, 0] on [a, b].

    Missing pairs are zero. Values may be ``Fraction``, ``int`` or ``float``.
    """

    def __init__(self, a: int, b: int, values: Mapping | None = None, check: bool = True):
        self.a, self.b = int(a), int(b)
        self.values = {}
        for (s, t), v in (values or {}).items():
            e = _edge(s, t)
            if check and not (-1 <= v <= 0):
                raise ValueError(f"U{e} = {v} outside [-1, 0]")
            if e[0] < a or e[1] > b:
                raise ValueError(f"pair {e} outside [{a}, {b}]")
            if v:
                self.values[e] = v
        self.zero = 0

    def __getitem__(self, e):
        return self.values.get(_edge(*e), 0)

    @classmethod
    def random(cls, b: int, rng: random.Random, exact: bool = False, discrete: bool = False) -> "UMatrix":
        vals = {}
        for s in range(b + 1):
            for t in range(s + 1, b + 1):
                if discrete:
                    vals[(s, t)] = -rng.randint(0, 1)
                elif exact:
                    vals[(s, t)] = -Fraction(rng.randint(0, 16), 16)
                else:
                    vals[(s, t)] = -rng.random()
        return cls(0, b, vals)


def evaluate_K(u: UMatrix, sub) -> object:
    """K[a, b] = prod over a <= s < t <= b of (1 + U_st); 1 on a single point."""
    a, b = sub
    if a < u.a or b > u.b:
        raise ValueError("sub-interval outside the U-matrix interval")
    out = 1
    for s in range(a, b + 1):
        for t in range(s + 1, b + 1):
            v = u.values.get((s, t))
            if v:
                out = out * (1 + v)
    return out


def evaluate_J(u: UMatrix, sub, N: int | None = None) -> object:
    """Sum over laces on ``sub`` (exactly N edges, or all when N is None) of
    prod_{st in L} U_st * prod_{compatible} (1 + U_st)."""
    a, b = sub
    if not a < b:
        raise ValueError("J needs a < b")
    if a < u.a or b > u.b:
        raise ValueError("sub-interval outside the U-matrix interval")
    n = b - a
    total = 0
    for es in _laces_from_zero(n, N):
        prod = 1
        for s, t in es:
            v = u.values.get((s + a, t + a), 0)
            if not v:
                prod = 0
                break
            prod = prod * v
        if not prod:
            continue
        for s, t in _compatible(n, es):
            v = u.values.get((s + a, t + a))
            if v:
                prod = prod * (1 + v)
        total = total + prod
    return total


def _all_graphs(a, b):
    pairs = [(s, t) for s in range(a, b + 1) for t in range(s + 1, b + 1)]
    if len(pairs) > 15:
        raise ValueError("brute-force graph expansion is limited to b - a <= 5")
    for r in range(len(pairs) + 1):
        for es in itertools.combinations(pairs, r):
            yield es


def K_graph_expansion(u: UMatrix, sub) -> object:
    """Brute-force sum over all graphs on ``sub`` of prod U (oracle)."""
    total = 0
    for es in _all_graphs(*sub):
        prod = 1
        for e in es:
            prod = prod * u[e]
        total = total + prod
    return total


def J_graph_expansion(u: UMatrix, sub, N: int | None = None) -> object:
    """Brute-force sum over connected graphs (with |L_Gamma| = N if given)."""
    a, b = sub
    total = 0
    for es in _all_graphs(a, b):
        if not _covers(a, b, es):
            continue
        if N is not None and len(_extract(a, b, es)) != N:
            continue
        prod = 1
        for e in es:
            prod = prod * u[e]
        total = total + prod
    return total


@dataclass
class JKCheck:
    ok: bool
    lhs: object
    rhs: object
    diff: object

    def __bool__(self):
        return self.ok


def verify_JK(u: UMatrix, b: int, tol: float = 1e-12) -> JKCheck:
    """Check K[0,b] = K[1,b] + J[0,b] + sum_{a=1}^{b-1} J[0,a] K[a+1,b]."""
    if b < 1:
        raise ValueError("b must be >= 1")
    lhs = evaluate_K(u, (0, b))
    rhs = evaluate_K(u, (1, b)) + evaluate_J(u, (0, b))
    for a in range(1, b):
        rhs = rhs + evaluate_J(u, (0, a)) * evaluate_K(u, (a + 1, b))
    diff = lhs - rhs
    exact = all(not isinstance(v, float) for v in u.values.values())
    ok = diff == 0 if exact else abs(diff) <= tol
    return JKCheck(bool(ok), lhs, rhs, diff)


@lru_cache(maxsize=None)
def lace_masks(n: int) -> tuple:
    """Bitmask form of the laces on [0, n] for {0,-1}-valued interactions.

    Returns ``(pair_index, entries)`` where ``pair_index[(s, t)]`` is the bit
    of pair st and each entry is ``(N, lace_mask, compatible_mask)``.
    """
    pair_index = {}
    for s in range(n + 1):
        for t in range(s + 1, n + 1):
            pair_index[(s, t)] = len(pair_index)
    entries = []
    for es in _laces_from_zero(n, None):
        lm = 0
        for e in es:
            lm |= 1 << pair_index[e]
        cm = 0
        for e in _compatible(n, es):
            cm |= 1 << pair_index[e]
        entries.append((len(es), lm, cm, any(es[i][1] == es[i + 1][0] for i in range(len(es) - 1))))
    return pair_index, tuple(entries)


def j_counts(n: int, pattern: int, no_abuttal: bool = False) -> dict:
    """J^(N)[0, n] for U_st = -1 exactly on the pairs set in ``pattern``.

    Returns ``{N: value}`` with the sign (-1)^N included. With
    ``no_abuttal`` only laces without abutting consecutive edges count.
    """
    _, entries = lace_masks(n)
    out: dict = {}
    for N, lm, cm, abut in entries:
        if no_abuttal and abut:
            continue
        if lm & pattern == lm and not (cm & pattern):
            out[N] = out.get(N, 0) + (-1) ** N
    return out


def selfcheck(max_b: int = 8, trials: int = 1000, seed: int = 7) -> dict:
    """Randomized JK identity check and small lace-count facts."""
    rng = random.Random(seed)
    failures = []
    for i in range(trials):
        b = rng.randint(1, max_b)
        u = UMatrix.random(b, rng, exact=(i % 2 == 0))
        res = verify_JK(u, b)
        if not res:
            failures.append({"trial": i, "b": b, "diff": str(res.diff)})
    counts = {"L1_all": all(len(enumerate_laces((0, n), 1)) == 1 for n in range(1, max_b + 1)),
              "L2_0_3": len(enumerate_laces((0, 3), 2))}
    return {"trials": trials, "max_b": max_b, "seed": seed, "failures": failures,
            "lace_counts": counts, "ok": not failures and counts["L1_all"] and counts["L2_0_3"] == 3}
