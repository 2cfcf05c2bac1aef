"""Exact polynomial oracle for bond percolation on small finite graphs.

Every quantity is a sum over bond configurations (or nested tuples of
independent configurations) of an indicator times the configuration weight.
Weights are tracked exactly through occupation counts: a term with ``k_j``
occupied class-j bonds over ``l`` independent configurations and ``m_j``
explicit factors ``p_b`` of class j contributes

    prod_j (n_j s)^(k_j + m_j) (1 - n_j s)^(l B_j - k_j),    s = p / den,

where class j collects the bonds with weight ``n_j / den`` and ``B_j`` bonds.
Count vectors indexed by the mixed-radix code of ``(k, m)`` are combined with
integer matrix products; conversion to a polynomial in ``p`` happens once at
the end.

Nested expectations are evaluated stage by stage. ``Phi_j(A, v)`` and
``Theta_j(A, v)`` (arrays over the target site) satisfy

    F_j(A, v) = sum_b p_b E[ I[E(v, y_b; A)] F_{j-1}(C~^b(v), y'_b) ],

with ``Phi_0(A, v) = P(E(v, x; A))`` and ``Theta_0(A, v) = P(v <-> x through A)``.
Values are memoized on ``(A, v)``, so each distinct cluster set costs one sweep.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _percscan as ps
from .errors import GuardError
from .series import ActivityPoly

MAX_BONDS = 24
WORK_BUDGET = 10**10




def _frac(v) -> Fraction:
    return Fraction(v) if not isinstance(v, str) else Fraction(v.strip())


@dataclass(frozen=True)
class BondConfig:
    """Occupation bitmask; bit i is the state of bond i."""

    bits: int
    width: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.width:
            raise ValueError("configuration bits exceed the bond count")

    def occupied(self, i: int) -> bool:
        return bool((self.bits >> i) & 1)


class FiniteGraph:
    """Finite set of Z^d sites with weighted bonds.

    Bond ``{a, b}`` is occupied with probability ``p * weight``. ``origin`` and
    ``probe`` are site indices.

    Parameters
    ----------
    sites : sequence of points (tuples of ints)
    bonds : sequence of ``(a, b, weight)`` with site indices a != b
    origin, probe : site indices
    """

    def __init__(self, sites: Sequence, bonds: Iterable, origin: int = 0, probe: int | None = None):
        self.sites = [tuple(int(c) for c in s) for s in sites]
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("duplicate sites")
        ns = len(self.sites)
        if ns > 30:
            raise GuardError("at most 30 sites are supported")
        seen = set()
        bl = []
        for a, b, w in bonds:
            a, b, w = int(a), int(b), _frac(w)
            if a == b:
                raise ValueError("bonds must connect distinct sites")
            if not (0 <= a < ns and 0 <= b < ns):
                raise ValueError(f"bond ({a}, {b}) references a missing site")
            if w <= 0:
                raise ValueError("bond weights must be positive")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate bond {key}")
            seen.add(key)
            bl.append((a, b, w))
        if len(bl) > MAX_BONDS:
            raise GuardError(f"{len(bl)} bonds exceed the hard guard of {MAX_BONDS}")
        self.bonds = bl
        self.origin = int(origin)
        self.probe = int(probe) if probe is not None else ns - 1
        self._cl = None
        self._piv: dict = {}
        self._keys = None

    # ---- construction helpers -------------------------------------------
    @classmethod
    def from_kernel(cls, kernel, sites: Sequence, origin: int = 0, probe: int | None = None) -> "FiniteGraph":
        """Induced graph: every pair of sites at a nonzero kernel offset."""
        sites = [tuple(s) for s in sites]
        bonds = []
        for i, x in enumerate(sites):
            for j in range(i + 1, len(sites)):
                w = kernel.weight(tuple(b - a for a, b in zip(x, sites[j])))
                if w:
                    bonds.append((i, j, w))
        return cls(sites, bonds, origin, probe)

    @classmethod
    def from_json(cls, doc) -> "FiniteGraph":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        extra = set(doc) - {"sites", "bonds", "origin", "probe"}
        if extra:
            raise ValueError(f"unknown graph keys {sorted(extra)}")
        if "sites" not in doc or "bonds" not in doc:
            raise ValueError("graph JSON needs 'sites' and 'bonds'")
        sites = [tuple(s) if isinstance(s, (list, tuple)) else (int(s),) for s in doc["sites"]]
        bonds = []
        for b in doc["bonds"]:
            if set(b) - {"a", "b", "prob"} or not {"a", "b", "prob"} <= set(b):
                raise ValueError("each bond needs exactly keys a, b, prob")
            bonds.append((b["a"], b["b"], _frac(b["prob"])))
        return cls(sites, bonds, doc.get("origin", 0), doc.get("probe"))

    def to_json(self) -> dict:
        return {"sites": [list(s) for s in self.sites],
                "bonds": [{"a": a, "b": b, "prob": f"{w.numerator}/{w.denominator}"} for a, b, w in self.bonds],
                "origin": self.origin, "probe": self.probe}

    # ---- basic properties -----------------------------------------------
    @property
    def nb(self) -> int:
        return len(self.bonds)

    @property
    def ns(self) -> int:
        return len(self.sites)

    @property
    def den(self) -> int:
        return reduce(math.lcm, (w.denominator for _, _, w in self.bonds), 1)

    @property
    def p_max(self) -> Fraction:
        """Largest p with every bond probability in [0, 1]."""
        return 1 / max(w for _, _, w in self.bonds) if self.bonds else Fraction(10**9)

    def site_index(self, x) -> int:
        if isinstance(x, (int, np.integer)):
            if not 0 <= x < self.ns:
                raise ValueError(f"site index {x} out of range")
            return int(x)
        return self.sites.index(tuple(x))

    def bond_mask_touching(self, amask: int) -> int:
        t = 0
        for i, (a, b, _) in enumerate(self.bonds):
            if (amask >> a) & 1 or (amask >> b) & 1:
                t |= 1 << i
        return t

    def with_bond(self, a: int, b: int, w) -> "FiniteGraph":
        return FiniteGraph(self.sites, self.bonds + [(a, b, w)], self.origin, self.probe)

    # ---- tables ---------------------------------------------------------
    def _arrays(self):
        ea = np.array([a for a, _, _ in self.bonds], dtype=np.int64)
        eb = np.array([b for _, b, _ in self.bonds], dtype=np.int64)
        return ea, eb

    def _mask_dtype(self):
        return np.uint16 if self.ns <= 16 else np.uint32

    def cluster_table(self) -> np.ndarray:
        if self._cl is None:
            ea, eb = self._arrays()
            cl = np.zeros((1 << self.nb, self.ns), dtype=np.uint32)
            ps.cluster_table(self.nb, self.ns, ea, eb, cl)
            self._cl = cl.astype(self._mask_dtype())
        return self._cl

    def pivot_table(self, v: int) -> np.ndarray:
        if v not in self._piv:
            ea, eb = self._arrays()
            piv = np.zeros((1 << self.nb, self.ns), dtype=self._mask_dtype())
            ps.pivot_table(self.cluster_table(), self.nb, self.ns, ea, eb, v, piv)
            self._piv[v] = piv
        return self._piv[v]

    def weight_classes(self):
        """(class weights, class bond masks, class index per bond)."""
        ws = sorted({w for _, _, w in self.bonds})
        idx = [ws.index(w) for _, _, w in self.bonds]
        masks = [sum(1 << i for i, j in enumerate(idx) if j == c) for c in range(len(ws))]
        return ws, masks, idx

    def occupation_keys(self):
        """Compact key per configuration: mixed-radix class occupation counts."""
        if self._keys is None:
            ws, masks, _ = self.weight_classes()
            sizes = [bin(m).count("1") for m in masks]
            rad, r = [], 1
            for b in sizes:
                rad.append(r)
                r *= b + 1
            kidx = np.arange(r, dtype=np.int64)
            keys = ps.occupation_keys(self.nb, np.array(masks, dtype=np.int64),
                                      np.array(rad, dtype=np.int64), kidx)
            self._keys = (keys, r, sizes, rad)
        return self._keys


# ---- exact count-vector engine -------------------------------------------

class _Engine:
    """Count-vector arithmetic for nested expectations up to ``lmax`` configurations."""

    def __init__(self, g: FiniteGraph, lmax: int):
        self.g, self.lmax = g, int(lmax)
        ws, masks, idx = g.weight_classes()
        self.den = g.den
        self.n = [int(w * self.den) for w in ws]
        keys, K, sizes, rad = g.occupation_keys()
        self.keys, self.K, self.sizes, self.crad = keys, K, sizes, rad
        J = len(ws)
        self.rk, r = [], 1
        for b in sizes:
            self.rk.append(r)
            r *= self.lmax * b + 1
        self.rm = []
        for _ in range(J):
            self.rm.append(r)
            r *= self.lmax
        self.E = r
        # encoded k-offset of every compact key
        self.kenc = np.zeros(K, dtype=np.int64)
        for key in range(K):
            code, rest = 0, key
            for j in range(J - 1, -1, -1):
                kj, rest = divmod(rest, rad[j])
                code += kj * self.rk[j]
            self.kenc[key] = code
        self.bclass = idx
        nbd = 2 * g.nb
        self.dtail = np.array([g.bonds[i // 2][i % 2] for i in range(nbd)], dtype=np.int64)
        self.dhead = np.array([g.bonds[i // 2][1 - i % 2] for i in range(nbd)], dtype=np.int64)
        self.dbond = np.array([i // 2 for i in range(nbd)], dtype=np.int64)
        self.memo: dict = {}
        self.sweeps = 0

    # -- vectors
    def from_counts(self, counts: np.ndarray) -> np.ndarray:
        """(ns, K) counts of single-configuration events -> (ns, E) vector."""
        out = np.zeros((counts.shape[0], self.E), dtype=np.int64)
        out[:, self.kenc] = counts
        return out

    def _bound_ok(self, l: int) -> bool:
        return (2 ** self.g.nb) ** l * max(1, 2 * self.g.nb) ** max(l - 1, 0) < 2**62

    def contract(self, counts: np.ndarray, lookup, l: int) -> np.ndarray:
        """sum_b p_b E[ indicator * F(mask, head_b) ] from sweep counts (nd, K, masks)."""
        ns, E = self.g.ns, self.E
        exact64 = self._bound_ok(l)
        G = np.zeros((ns, E), dtype=np.int64 if exact64 else object)
        for db in range(counts.shape[0]):
            C = counts[db]
            cols = np.flatnonzero(C.any(axis=0))
            if not len(cols):
                continue
            Cs = C[:, cols]
            rows = np.flatnonzero(Cs.any(axis=1))
            Cs = Cs[rows]
            F = np.stack([lookup(int(m), int(self.dhead[db])) for m in cols])  # (M, ns, E)
            Z = self._matmul(Cs, F.reshape(len(cols), ns * E)).reshape(len(rows), ns, E)
            off = self.rm[self.bclass[self.dbond[db]]]
            for r, key in enumerate(rows):
                s = int(self.kenc[key]) + off
                if s < E:
                    G[:, s:] += Z[r, :, : E - s]
        return G

    @staticmethod
    def _matmul(C: np.ndarray, F: np.ndarray) -> np.ndarray:
        """Exact nonnegative integer product, int64 when safe, else via limbs."""
        cmax = int(C.max()) if C.size else 0
        if F.dtype != object:
            fmax = int(F.max()) if F.size else 0
            if cmax * max(fmax, 1) * C.shape[1] < 2**62:
                return C @ F
        F = F.astype(object)
        bits = max(1, 62 - (cmax * C.shape[1]).bit_length())
        base = 1 << bits
        out = np.zeros((C.shape[0], F.shape[1]), dtype=object)
        shift = 0
        rest = F
        while np.any(rest != 0):
            limb = (rest % base).astype(np.int64)
            out += (C @ limb).astype(object) << shift if shift else (C @ limb).astype(object)
            rest = rest // base
            shift += bits
        return out

    def to_poly(self, vec, l: int) -> ActivityPoly:
        """Decode a count vector for ``l`` configurations into a poly in p."""
        J = len(self.n)
        deg = l * self.g.nb + self.lmax
        coeff = [0] * (deg + 1)
        binom_cache: dict = {}

        def one_minus(nj, e):
            key = (nj, e)
            if key not in binom_cache:
                binom_cache[key] = [math.comb(e, i) * (-nj) ** i for i in range(e + 1)]
            return binom_cache[key]

        for e in np.flatnonzero(vec != 0):
            cnt = int(vec[e])
            rest = int(e)
            ks, ms = [0] * J, [0] * J
            for j in range(J - 1, -1, -1):
                ms[j], rest = divmod(rest, self.rm[j])
            for j in range(J - 1, -1, -1):
                ks[j], rest = divmod(rest, self.rk[j])
            poly = [cnt]
            for j in range(J):
                a = ks[j] + ms[j]
                f = one_minus(self.n[j], l * self.sizes[j] - ks[j])
                scale = self.n[j] ** a
                new = [0] * (len(poly) + len(f) - 1 + a)
                for i, c in enumerate(poly):
                    if c:
                        for t, d in enumerate(f):
                            new[i + t + a] += c * d * scale
                poly = new
            for i, c in enumerate(poly):
                coeff[i] += c
        while len(coeff) > 1 and coeff[-1] == 0:
            coeff.pop()
        out = [Fraction(c, self.den**i) for i, c in enumerate(coeff)]
        return ActivityPoly(out, max(len(out) - 1, 0))

    # -- nested stages
    def stage(self, kind: str, level: int, amask: int, v: int) -> np.ndarray:
        key = (kind, level, amask, v)
        if key in self.memo:
            return self.memo[key]
        g = self.g
        cl = g.cluster_table()
        tmask = g.bond_mask_touching(amask)
        self.sweeps += 1
        if level == 0:
            if kind == "phi":
                cnt = ps.scan_event(cl, g.pivot_table(v), self.keys, self.K, v, tmask, amask)
            else:
                cnt = ps.scan_through(cl, self.keys, self.K, v, tmask, amask)
            out = self.from_counts(cnt)
        else:
            cnt = ps.scan_stage(cl, g.pivot_table(v), self.keys, self.K, v, tmask, amask,
                                self.dtail, self.dbond)
            out = self.contract(cnt, lambda m, h: self.stage(kind, level - 1, m, h), level + 1)
        self.memo[key] = out
        return out

    def start(self, kind: str, level: int) -> np.ndarray:
        g = self.g
        o = g.origin
        cnt = ps.scan_start(g.cluster_table(), g.pivot_table(o), self.keys, self.K, o,
                            self.dtail, self.dbond)
        self.sweeps += 1
        return self.contract(cnt, lambda m, h: self.stage(kind, level, m, h), level + 2)


def projected_work(g: FiniteGraph, depth: int) -> int:
    """Upper estimate of configuration visits for ``depth`` nested stages."""
    return (1 << g.nb) * (2 + depth * g.ns * (1 << g.ns))


def _guard(g: FiniteGraph, depth: int, budget: int = WORK_BUDGET):
    w = projected_work(g, depth)
    if w > budget:
        raise GuardError(f"projected work {w:.3g} configuration visits exceeds budget {budget:.3g}")


# ---- public single-configuration-level quantities --------------------------

def _engine(g: FiniteGraph, lmax: int) -> _Engine:
    cache = g.__dict__.setdefault("_engines", {})
    if lmax not in cache:
        cache[lmax] = _Engine(g, lmax)
    return cache[lmax]


def two_point_all(g: FiniteGraph, v) -> list:
    """[tau(v, x) for every site x] as exact polynomials."""
    v = g.site_index(v)
    eng = _engine(g, 1)
    cnt = ps.scan_connect(g.cluster_table(), eng.keys, eng.K, v)
    vec = eng.from_counts(cnt)
    return [eng.to_poly(vec[x], 1) for x in range(g.ns)]


def exact_two_point(g: FiniteGraph, x, y) -> ActivityPoly:
    """P(x <-> y) as an exact polynomial in p."""
    return two_point_all(g, x)[g.site_index(y)]


def psi0_all(g: FiniteGraph) -> list:
    """[(1 - delta) P(x doubly connected to the origin) for every site x]."""
    eng = _engine(g, 1)
    o = g.origin
    cnt = ps.scan_double(g.cluster_table(), g.pivot_table(o), eng.keys, eng.K, o)
    vec = eng.from_counts(cnt)
    out = [eng.to_poly(vec[x], 1) for x in range(g.ns)]
    out[o] = ActivityPoly.zero(out[o].max_order)
    return out


def exact_psi0(g: FiniteGraph, x) -> ActivityPoly:
    """Probability of two bond-disjoint occupied paths from the origin to x (x != origin)."""
    return psi0_all(g)[g.site_index(x)]


def _amask(g: FiniteGraph, A) -> int:
    m = 0
    for a in A:
        m |= 1 << g.site_index(a)
    return m


def restricted_two_point(g: FiniteGraph, A, v, x) -> ActivityPoly:
    """P(v <-> x by a path avoiding every site of A)."""
    eng = _engine(g, 1)
    am = _amask(g, A)
    v = g.site_index(v)
    cnt = ps.scan_restricted(g.cluster_table(), eng.keys, eng.K, v, g.bond_mask_touching(am), am)
    return eng.to_poly(eng.from_counts(cnt)[g.site_index(x)], 1)


def through_two_point(g: FiniteGraph, A, v, x) -> ActivityPoly:
    """P(v connected to x through A)."""
    eng = _engine(g, 1)
    am = _amask(g, A)
    v = g.site_index(v)
    cnt = ps.scan_through(g.cluster_table(), eng.keys, eng.K, v, g.bond_mask_touching(am), am)
    return eng.to_poly(eng.from_counts(cnt)[g.site_index(x)], 1)


def psi_n_all(g: FiniteGraph, n: int, budget: int = WORK_BUDGET) -> list:
    """[psi^(n)(origin, x) for every x]; n = 0 gives the double-connection term."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return psi0_all(g)
    _guard(g, n, budget)
    eng = _engine(g, n + 1)
    vec = eng.start("phi", n - 1)
    return [eng.to_poly(vec[x], n + 1) for x in range(g.ns)]


def psi_n_exact(g: FiniteGraph, n: int, x, budget: int = WORK_BUDGET) -> ActivityPoly:
    """Nested-expectation coefficient psi^(n)(origin, x)."""
    return psi_n_all(g, n, budget)[g.site_index(x)]


def remainder_all(g: FiniteGraph, N: int, budget: int = WORK_BUDGET) -> list:
    """[R^(N)(origin, x) for every x]."""
    if N < 0:
        raise ValueError("N must be >= 0")
    _guard(g, N + 1, budget)
    eng = _engine(g, N + 2)
    vec = eng.start("theta", N)
    return [eng.to_poly(vec[x], N + 2) for x in range(g.ns)]


def remainder_exact(g: FiniteGraph, N: int, x, budget: int = WORK_BUDGET) -> ActivityPoly:
    """Remainder R^(N)(origin, x)."""
    return remainder_all(g, N, budget)[g.site_index(x)]


# ---- single configurations -------------------------------------------------

def _clusters_py(g: FiniteGraph, bits: int) -> list:
    parent = list(range(g.ns))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, (a, b, _) in enumerate(g.bonds):
        if (bits >> i) & 1:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    return [find(i) for i in range(g.ns)]


def cluster_of(g: FiniteGraph, bits: int, v: int) -> frozenset:
    lab = _clusters_py(g, bits)
    return frozenset(i for i in range(g.ns) if lab[i] == lab[v])


def connected_through(g: FiniteGraph, bits: int, v: int, y: int, A) -> bool:
    """Every occupied path v -> y uses a bond with an endpoint in A (v = y: v in A)."""
    A = {g.site_index(a) for a in A}
    if v == y:
        return v in A
    if y not in cluster_of(g, bits, v):
        return False
    rest = bits & ~g.bond_mask_touching(sum(1 << a for a in A))
    return y not in cluster_of(g, rest, v)


def pivotal_analysis(g: FiniteGraph, config: BondConfig, x, y, A=None) -> dict:
    """Ordered directed pivotal bonds for x <-> y, the sets C~^b(x), and the
    through-connection and E(x, y; A) indicators when ``A`` is given."""
    if config.width != g.nb:
        raise ValueError("configuration width differs from the bond count")
    x, y = g.site_index(x), g.site_index(y)
    bits = config.bits
    full = cluster_of(g, bits, x)
    if y not in full:
        raise ValueError("x and y are not connected in this configuration")
    piv = []
    for i, (a, b, _) in enumerate(g.bonds):
        if not (bits >> i) & 1:
            continue
        c = cluster_of(g, bits & ~(1 << i), x)
        if y not in c:
            first, second = (a, b) if a in c else (b, a)
            piv.append(((first, second), c))
    piv.sort(key=lambda t: len(t[1]))
    report = {"pivotal": [p for p, _ in piv],
              "ctilde": {p: sorted(c) for p, c in piv}}
    if A is not None:
        A = [g.site_index(a) for a in A]
        thr = connected_through(g, bits, x, y, A)
        bad = [p for p, _ in piv if connected_through(g, bits, x, p[0], A)]
        report["through"] = thr
        report["event_E"] = bool(thr and not bad)
    return report


def ctilde(g: FiniteGraph, config: BondConfig, bond: int, v) -> list:
    """Sites connected to v once ``bond`` is made vacant."""
    return sorted(cluster_of(g, config.bits & ~(1 << bond), g.site_index(v)))


def double_connected_maxflow(g: FiniteGraph, bits: int, x: int) -> bool:
    """Max-flow >= 2 between origin and x on occupied bonds (unit capacities)."""
    import networkx as nx
    if x == g.origin:
        return False
    G = nx.DiGraph()
    G.add_nodes_from(range(g.ns))
    for i, (a, b, _) in enumerate(g.bonds):
        if (bits >> i) & 1:
            G.add_edge(a, b, capacity=1)
            G.add_edge(b, a, capacity=1)
    return nx.maximum_flow_value(G, g.origin, x) >= 2


# ---- the identity ------------------------------------------------------------

@dataclass
class PercIdentityReport:
    ok: bool
    N: int
    targets: list
    first_mismatch: dict | None
    lhs: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    psi: dict = field(default_factory=dict)
    remainder: dict = field(default_factory=dict)
    sweeps: int = 0

    def to_json(self) -> dict:
        enc = lambda d: {str(k): v.to_strings() for k, v in d.items()}
        return {"ok": self.ok, "N": self.N, "targets": self.targets,
                "first_mismatch": self.first_mismatch, "lhs": enc(self.lhs), "rhs": enc(self.rhs),
                "psi": {str(n): enc(v) for n, v in self.psi.items()},
                "remainder": enc(self.remainder), "sweeps": self.sweeps}


def _delta(g, a, b, m) -> ActivityPoly:
    return ActivityPoly.one(m) if a == b else ActivityPoly.zero(m)


def verify_perc_expansion(g: FiniteGraph, x=None, N: int = 0, budget: int = WORK_BUDGET) -> PercIdentityReport:
    """Exact check of the N-th order expansion identity in site-pair form.

    tau(0, x) = delta + Psi(0, x) + sum_(u,v) [delta + Psi](0, u) p_uv tau(v, x)
                + (-1)^(N+1) R^(N)(0, x),     Psi = sum_{n<=N} (-1)^n psi^(n).

    ``x`` may be a site, a list of sites, or None (all sites).
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    _guard(g, N + 1, budget)
    targets = list(range(g.ns)) if x is None else (
        [g.site_index(t) for t in x] if isinstance(x, list) else [g.site_index(x)])
    o = g.origin
    psi = {n: psi_n_all(g, n, budget) for n in range(N + 1)}
    R = remainder_all(g, N, budget)
    deg = (N + 2) * g.nb + N + 2
    big = lambda P: ActivityPoly(P.coeffs, deg)
    Psi = [sum((big(psi[n][u]) * (-1) ** n for n in range(N + 1)), ActivityPoly.zero(deg)) for u in range(g.ns)]
    tau = {v: [big(t) for t in two_point_all(g, v)] for v in range(g.ns)}
    lhs, rhs = {}, {}
    mismatch = None
    for t in targets:
        r = _delta(g, o, t, deg) + Psi[t] + big(R[t]) * (-1) ** (N + 1)
        for a, b, w in g.bonds:
            for u, v in ((a, b), (b, a)):
                front = _delta(g, o, u, deg) + Psi[u]
                if front.is_zero():
                    continue
                r = r + (front * tau[v][t]).shift(1) * w
        l = tau[o][t]
        lhs[t], rhs[t] = l, r
        if mismatch is None and l != r:
            i = next(i for i in range(deg + 1) if l[i] != r[i])
            mismatch = {"site": t, "order": i, "lhs": str(l[i]), "rhs": str(r[i])}
    eng_sweeps = sum(e.sweeps for e in g.__dict__.get("_engines", {}).values())
    return PercIdentityReport(mismatch is None, N, targets, mismatch, lhs, rhs,
                              {n: {t: psi[n][t] for t in targets} for n in psi},
                              {t: R[t] for t in targets}, eng_sweeps)


# ---- standard graphs ----------------------------------------------------------

def single_bond(weight=Fraction(1, 3)) -> FiniteGraph:
    return FiniteGraph([(0,), (1,)], [(0, 1, weight)], 0, 1)


def path_graph(n: int, weight=1) -> FiniteGraph:
    return FiniteGraph([(i,) for i in range(n)], [(i, i + 1, weight) for i in range(n - 1)], 0, n - 1)


def cycle_graph(n: int, weight=1) -> FiniteGraph:
    return FiniteGraph([(i,) for i in range(n)], [(i, (i + 1) % n, weight) for i in range(n)], 0, n // 2)


def parallel_paths(weight=1) -> FiniteGraph:
    """Sites 0, 1, a, b with paths 0-a-1 and 0-b-1."""
    return FiniteGraph([(0, 0), (2, 0), (1, 1), (1, -1)],
                       [(0, 2, weight), (2, 1, weight), (0, 3, weight), (3, 1, weight)], 0, 1)


def line_graph(n: int = 5, L: int = 2) -> FiniteGraph:
    """n consecutive sites of Z with the uniform range-L kernel (origin included in Omega)."""
    from .lattice import build_kernel
    k = build_kernel("uniform", L=L, d=1)
    return FiniteGraph.from_kernel(k, [(i,) for i in range(n)], 0, n - 1)


def box_graph(side: int = 3, L: int = 1, d: int = 2) -> FiniteGraph:
    """A side^d box of Z^d with the uniform range-L kernel."""
    import itertools
    from .lattice import build_kernel
    k = build_kernel("uniform", L=L, d=d)
    sites = list(itertools.product(range(side), repeat=d))
    return FiniteGraph.from_kernel(k, sites, 0, len(sites) - 1)
