"""Exact series for the combinatorial models and the expansion identity.

Walk-based quantities (RW, SAW, and SAW's psi) come from a vectorized sweep
over all step sequences: every walk is reduced to the bitmask of pairs of
times at which it visits the same site, and the laces module turns that
pattern into J^(N) counts. Trees and animals are grown bond by bond from the
origin and deduplicated as bond sets.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import networkx as nx
import numpy as np

from .errors import GuardError
from .laces import j_counts, lace_masks
from .lattice import ScalarField, StepKernel, Torus, kernel_fourier
from .series import ActivityPoly, SiteSeries

GUARD = 10 ** 9
_CHUNK = 2_000_000


def _kkey(k: StepKernel):
    return (k.d, k.L, tuple(sorted(k.weights.items())))


_KERNELS: dict = {}


def _register(k: StepKernel):
    key = _kkey(k)
    _KERNELS.setdefault(key, k)
    return key


# ---------------------------------------------------------------- walks

@lru_cache(maxsize=64)
def _walk_groups(kkey, n: int) -> dict:
    """Group all n-step walks by (coincidence pattern, endpoint).

    Returns ``{(pattern, endpoint): numerator}`` where the walk weight is
    numerator / den**n with den the kernel's common denominator.
    """
    k = _KERNELS[kkey]
    offs = k.offsets
    den = k.common_denominator()
    nums = np.array([int(k.weights[tuple(o)] * den) for o in offs], dtype=np.int64)
    m = len(offs)
    if n == 0:
        return {(0, (0,) * k.d): 1}
    if m ** n > GUARD:
        raise GuardError(f"{m}^{n} = {m ** n:.3g} walks exceeds the guard {GUARD:.0e}")
    pair_index, _ = lace_masks(n)
    pairs = sorted(pair_index.items(), key=lambda kv: kv[1])
    # split off leading steps so that each chunk stays below _CHUNK walks
    lead = 0
    while lead < n and m ** (n - lead) > _CHUNK:
        lead += 1
    tail = n - lead
    tail_idx = np.indices((m,) * tail).reshape(tail, -1).T if tail else np.zeros((1, 0), dtype=np.int64)
    out: dict = {}
    base = 2 * n * k.L + 1
    for prefix in itertools.product(range(m), repeat=lead):
        steps = np.concatenate([np.broadcast_to(np.array(prefix, dtype=np.int64), (len(tail_idx), lead)),
                                tail_idx], axis=1)
        disp = offs[steps]  # (W, n, d)
        pos = np.concatenate([np.zeros((len(steps), 1, k.d), dtype=np.int64), np.cumsum(disp, axis=1)], axis=1)
        pattern = np.zeros(len(steps), dtype=np.int64)
        for (s, t), bit in pairs:
            eq = np.all(pos[:, s, :] == pos[:, t, :], axis=1)
            pattern |= eq.astype(np.int64) << bit
        weight = np.prod(nums[steps], axis=1)
        end = pos[:, n, :] + n * k.L
        key = pattern
        for c in range(k.d):
            key = key * base + end[:, c]
        order = np.argsort(key, kind="stable")
        ks = key[order]
        ws = weight[order]
        starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]])
        sums = np.add.reduceat(ws, starts)
        for kv, sv in zip(ks[starts].tolist(), sums.tolist()):
            out[kv] = out.get(kv, 0) + sv
    decoded = {}
    for kv, sv in out.items():
        coords = []
        for _ in range(k.d):
            coords.append(kv % base - n * k.L)
            kv //= base
        decoded[(kv, tuple(reversed(coords)))] = sv
    return decoded


def _add_coeff(entries: dict, x, order: int, value, max_order: int):
    if value == 0:
        return
    poly = entries.get(x)
    if poly is None:
        poly = [Fraction(0)] * (max_order + 1)
        entries[x] = poly
    poly[order] += value


def _finish(entries: dict, k: StepKernel, model: str, max_order: int, radius: int) -> SiteSeries:
    ent = {x: ActivityPoly(c, max_order) for x, c in entries.items()
           if max(abs(v) for v in x) <= radius and any(c)}
    return SiteSeries(k, model, max_order, radius, ent)


def projected_count(model: str, kernel: StepKernel, max_order: int) -> float:
    """Rough count of objects an enumeration would visit."""
    m = len(kernel.weights)
    if model in ("SAW", "RW"):
        return float(sum(m ** n for n in range(max_order + 1)))
    # trees/animals: at most (2 m)^k bond sets grown per level, times backbone choices
    return float(sum((2 * m) ** n for n in range(max_order + 1)))


def _guard(model, kernel, max_order):
    est = projected_count(model, kernel, max_order)
    if est > GUARD:
        raise GuardError(f"projected {est:.3g} objects for {model} at order {max_order} exceeds {GUARD:.0e}")


# ---------------------------------------------------------------- trees / animals

@lru_cache(maxsize=16)
def _bond_sets(kkey, max_bonds: int, trees: bool) -> tuple:
    """Connected bond sets containing the origin, by bond count.

    Bonds join distinct sites x != y with D(y - x) > 0. Each entry is
    ``(bonds, sites, weight)`` with the weight the product of D over bonds.
    """
    k = _KERNELS[kkey]
    steps = [e for e in k.weights if any(e)]
    origin = (0,) * k.d
    levels = [[(frozenset(), frozenset([origin]), Fraction(1))]]
    for nb in range(1, max_bonds + 1):
        seen = {}
        for bonds, sites, w in levels[-1]:
            for x in sites:
                for e in steps:
                    y = tuple(a + b for a, b in zip(x, e))
                    if trees and y in sites:
                        continue
                    bond = (x, y) if x < y else (y, x)
                    if bond in bonds:
                        continue
                    nbonds = bonds | {bond}
                    if nbonds in seen:
                        continue
                    seen[nbonds] = (nbonds, sites | {y}, w * k.weights[e])
        levels.append(list(seen.values()))
    return tuple(tuple(lv) for lv in levels)


def _two_edge_components(bonds, sites) -> dict:
    """Site -> label of its 2-edge-connected component."""
    g = nx.Graph()
    g.add_nodes_from(sites)
    g.add_edges_from(bonds)
    h = g.copy()
    h.remove_edges_from(nx.bridges(g))
    lab = {}
    for i, comp in enumerate(nx.connected_components(h)):
        for s in comp:
            lab[s] = i
    return lab


@lru_cache(maxsize=16)
def _la_beads(kkey, max_bonds: int) -> tuple:
    """Beads for lattice animals: (sites, end, weight, size) with the end
    doubly connected to the origin inside the animal (the origin itself
    always qualifies)."""
    levels = _bond_sets(kkey, max_bonds, False)
    out = []
    for size, lv in enumerate(levels):
        row = []
        for bonds, sites, w in lv:
            lab = _two_edge_components(bonds, sites)
            o = lab[next(iter(s for s in sites if not any(s)))]
            for s in sites:
                if lab[s] == o:
                    row.append((sites, s, w))
        out.append(tuple(row))
    return tuple(out)


def _shift(sites, y):
    return frozenset(tuple(a + b for a, b in zip(s, y)) for s in sites)


# ---------------------------------------------------------------- two-point series

def two_point_series(model: str, kernel: StepKernel, max_order: int, radius: int | None = None) -> SiteSeries:
    """Exact two-point series sigma_p (SAW), rho_p (LT), rho_p^a (LA) or S_p (RW)."""
    model = model.upper()
    key = _register(kernel)
    full = kernel.L * max_order
    radius = full if radius is None else min(radius, full)
    _guard(model, kernel, max_order)
    den = kernel.common_denominator()
    entries: dict = {}
    if model in ("SAW", "RW"):
        for n in range(max_order + 1):
            for (pat, x), num in _walk_groups(key, n).items():
                if model == "RW" or pat == 0:
                    _add_coeff(entries, x, n, Fraction(num, den ** n), max_order)
    elif model in ("LT", "LA"):
        levels = _bond_sets(key, max_order, model == "LT")
        for n, lv in enumerate(levels):
            for bonds, sites, w in lv:
                for x in sites:
                    _add_coeff(entries, x, n, w, max_order)
    else:
        raise ValueError(f"unknown model {model!r}")
    return _finish(entries, kernel, model, max_order, radius)


def a_series(model: str, kernel: StepKernel, max_order: int) -> ActivityPoly:
    """a_p = 1 (SAW, RW) or the two-point function at the origin (LT, LA)."""
    model = model.upper()
    if model in ("SAW", "RW"):
        return ActivityPoly.one(max_order)
    return two_point_series(model, kernel, max_order, radius=0)[(0,) * kernel.d]


# ---------------------------------------------------------------- psi series

def _saw_psi_all(kernel, max_order, no_abuttal=False) -> dict:
    """{N: entries} for SAW; walks of length >= 1 (a zero step of a kernel
    with D(0) > 0 is a one-step self-intersection)."""
    key = _register(kernel)
    den = kernel.common_denominator()
    per_n: dict = {}
    for n in range(1, max_order + 1):
        for (pat, x), num in _walk_groups(key, n).items():
            if pat == 0:
                continue
            for N, jv in j_counts(n, pat, no_abuttal).items():
                ent = per_n.setdefault(N, {})
                # psi^(N) = (-1)^N sum W J^(N); J^(N) already carries (-1)^N
                _add_coeff(ent, x, n, Fraction(num * jv * (-1) ** N, den ** n), max_order)
    return per_n


def _pattern_from_sets(sets) -> int:
    n = len(sets) - 1
    pair_index, _ = lace_masks(n)
    pat = 0
    for (s, t), bit in pair_index.items():
        if not sets[s].isdisjoint(sets[t]):
            pat |= 1 << bit
    return pat


def _lt_psi_all(kernel, max_order) -> dict:
    key = _register(kernel)
    trees = _bond_sets(key, max_order, True)
    origin = (0,) * kernel.d
    steps = list(kernel.weights.items())
    per_n: dict = {}

    def close(beads, pos, order, w):
        pat = _pattern_from_sets(beads)
        if pat == 0:
            return
        for N, jv in j_counts(len(beads) - 1, pat).items():
            _add_coeff(per_n.setdefault(N, {}), pos, order, w * jv * (-1) ** N, max_order)

    def extend(beads, pos, order, w):
        # beads[-1] already placed at pos; try one more backbone step
        if len(beads) >= 2:
            close(beads, pos, order, w)
        for e, de in steps:
            if order + 1 > max_order:
                break
            y = tuple(a + b for a, b in zip(pos, e))
            for size in range(0, max_order - order):
                for _, sites, tw in trees[size]:
                    extend(beads + [_shift(sites, y)], y, order + 1 + size, w * de * tw)

    for size in range(0, max_order):
        for _, sites, tw in trees[size]:
            extend([sites], origin, size, tw)
    return per_n


def _la_psi_all(kernel, max_order) -> dict:
    key = _register(kernel)
    beads = _la_beads(key, max_order)
    animals = _bond_sets(key, max_order, False)
    origin = (0,) * kernel.d
    steps = list(kernel.weights.items())
    per_n: dict = {0: {}}
    # N = 0: doubly connected animals from 0 to x != 0
    for size, row in enumerate(beads):
        for sites, end, w in row:
            if any(end):
                _add_coeff(per_n[0], end, size, w, max_order)

    def close(sets, pos, order, w):
        pat = _pattern_from_sets(sets)
        if pat == 0:
            return
        for N, jv in j_counts(len(sets) - 1, pat).items():
            _add_coeff(per_n.setdefault(N, {}), pos, order, w * jv * (-1) ** N, max_order)

    def extend(sets, end, order, w):
        # the last bead ends at ``end``; add a backbone bond and a new bead
        for e, de in steps:
            if order + 1 > max_order:
                break
            v = tuple(a + b for a, b in zip(end, e))
            for size in range(0, max_order - order):
                for sites, bend, bw in beads[size]:
                    nsets = sets + [_shift(sites, v)]
                    nend = tuple(a + b for a, b in zip(bend, v))
                    no = order + 1 + size
                    nw = w * de * bw
                    close(nsets, nend, no, nw)
                    extend(nsets, nend, no, nw)

    for size in range(0, max_order):
        for sites, end, w in beads[size]:
            extend([sites], end, size, w)
    del animals
    return per_n


@lru_cache(maxsize=32)
def _psi_cached(model, kkey, max_order, no_abuttal=False):
    k = _KERNELS[kkey]
    if model == "SAW":
        return _saw_psi_all(k, max_order, no_abuttal)
    if model == "LT":
        return _lt_psi_all(k, max_order)
    if model == "LA":
        return _la_psi_all(k, max_order)
    raise ValueError(f"psi is defined for SAW, LT, LA; got {model!r}")


def psi_series(model: str, kernel: StepKernel, N: int, max_order: int, radius: int | None = None) -> SiteSeries:
    """Exact psi_p^(N) (nonnegative convention: psi = sum_N (-1)^N psi^(N))."""
    model = model.upper()
    if model not in ("SAW", "LT", "LA"):
        raise ValueError(f"psi is defined for SAW, LT, LA; got {model!r}")
    if N < 0 or (N == 0 and model != "LA"):
        raise ValueError("N must be >= 1 (LA also allows N = 0)")
    _guard(model, kernel, max_order)
    per_n = _psi_cached(model, _register(kernel), max_order)
    full = kernel.L * max_order
    radius = full if radius is None else min(radius, full)
    return _finish(per_n.get(N, {}), kernel, "PSI", max_order, radius)


def psi_total(model: str, kernel: StepKernel, max_order: int) -> SiteSeries:
    """psi_p = sum_N (-1)^N psi_p^(N) as one series."""
    model = model.upper()
    _guard(model, kernel, max_order)
    per_n = _psi_cached(model, _register(kernel), max_order)
    acc: dict = {}
    for N, ent in per_n.items():
        for x, c in ent.items():
            for i, v in enumerate(c):
                _add_coeff(acc, x, i, v * (-1) ** N, max_order)
    return _finish(acc, kernel, "PSI", max_order, kernel.L * max_order)


def psi_levels(model: str, kernel: StepKernel, max_order: int) -> dict:
    """All psi^(N) series keyed by N."""
    per_n = _psi_cached(model.upper(), _register(kernel), max_order)
    return {N: _finish(ent, kernel, "PSI", max_order, kernel.L * max_order) for N, ent in sorted(per_n.items())}


# ---------------------------------------------------------------- identity

@dataclass
class IdentityReport:
    model: str
    max_order: int
    radius: int
    ok: bool
    sites_checked: int
    first_failure: tuple | None = None
    per_order: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok


def expansion_rhs(U: SiteSeries, psi: SiteSeries, a: ActivityPoly) -> SiteSeries:
    """a delta + psi + a (pD*U) + psi*pD*U."""
    k = U.kernel
    origin = (0,) * k.d
    delta = SiteSeries(k, U.model, U.max_order, U.radius, {origin: a.truncate(U.max_order)})
    pdU = U.step()
    return delta + psi + pdU.scale(a) + psi.convolve(pdU)


def verify_expansion_identity(model: str, kernel: StepKernel, max_order: int, radius: int | None = None,
                              U: SiteSeries | None = None, psi: SiteSeries | None = None) -> IdentityReport:
    """Check U = a delta + psi + a(pD*U) + psi*pD*U coefficient by coefficient."""
    model = model.upper()
    full = kernel.L * max_order
    radius = full if radius is None else radius
    if radius > full:
        raise ValueError("radius beyond L*max_order would read incomplete coefficients")
    if U is None:
        U = two_point_series(model, kernel, max_order)
    if model == "RW":
        psi = SiteSeries(kernel, "PSI", max_order, U.radius, {}) if psi is None else psi
        a = ActivityPoly.one(max_order)
    else:
        psi = psi_total(model, kernel, max_order) if psi is None else psi
        a = U[(0,) * kernel.d] if model in ("LT", "LA") else ActivityPoly.one(max_order)
    if U.max_order != psi.max_order:
        raise ValueError("inconsistent truncations between U and psi")
    rhs = expansion_rhs(U, psi, a)
    per_order = {n: True for n in range(max_order + 1)}
    first = None
    count = 0
    for x in itertools.product(range(-radius, radius + 1), repeat=kernel.d):
        count += 1
        lhs_x, rhs_x = U[x], rhs[x]
        for n in range(max_order + 1):
            if lhs_x[n] != rhs_x[n]:
                per_order[n] = False
                if first is None:
                    first = (n, x, lhs_x[n], rhs_x[n])
    return IdentityReport(model, max_order, radius, first is None, count, first, per_order)


# ---------------------------------------------------------------- SAW pi decomposition

def pi_series(kernel: StepKernel, n: int, max_order: int) -> SiteSeries:
    """pi_p^(n): the no-abuttal part of psi_p^(n) for SAW."""
    per_n = _psi_cached("SAW", _register(kernel), max_order, True)
    return _finish(per_n.get(n, {}), kernel, "PI", max_order, kernel.L * max_order)


def _compositions(N):
    if N == 0:
        yield ()
        return
    for first in range(1, N + 1):
        for rest in _compositions(N - first):
            yield (first,) + rest


def pi_decomposition_check(kernel: StepKernel, max_order: int, p_values=(Fraction(1, 20),)) -> dict:
    """Coefficientwise and pointwise checks of the pi-convolution bound and
    of the standard bounds on pi^(1) and pi^(n) (n >= 2) for SAW.

    ``pi1_bound`` is the bound delta_{0,x} sum_v pD(v) sigma'(v). With
    D(0) > 0 the one-step zero walk contributes pD(0) at x = 0, which that
    bound omits; ``pi1_bound_zero_step`` adds this term.
    """
    from .diagrams import saw_M_series  # local import to keep modules acyclic
    psis = psi_levels("SAW", kernel, max_order)
    pis = {n: pi_series(kernel, n, max_order) for n in range(1, max_order + 1)}
    origin = (0,) * kernel.d
    report = {"max_order": max_order, "checks": {}}
    # psi^(N) <= sum over compositions of pi convolutions
    ok_conv = True
    detail = []
    for N, ps in psis.items():
        bound = SiteSeries(kernel, "PI", max_order, ps.radius, {})
        for comp in _compositions(N):
            term = None
            for ni in comp:
                term = pis[ni] if term is None else term.convolve(pis[ni])
            bound = bound + term
        for x, v in ps.entries.items():
            b = bound[x]
            if any(v[i] > b[i] for i in range(max_order + 1)):
                ok_conv = False
                detail.append((N, x))
    report["checks"]["psi_le_pi_convolutions"] = {"ok": ok_conv, "violations": detail[:10]}
    sigma = two_point_series("SAW", kernel, max_order)
    sprime = {x: v for x, v in sigma.entries.items() if any(x)}
    pi1_b = ActivityPoly.zero(max_order)
    for vsite, w in kernel.weights.items():
        if vsite in sprime:
            pi1_b = pi1_b + sprime[vsite].shift(1) * w
    zero_step = ActivityPoly.monomial(1, kernel.weight(origin), max_order)
    pi1 = pis[1]
    off = [x for x in pi1.entries if any(x)]
    c0 = pi1[origin]
    report["checks"]["pi1_supported_at_origin"] = {"ok": not off, "sites": off[:10]}
    report["checks"]["pi1_bound"] = {"ok": all(c0[i] <= pi1_b[i] for i in range(max_order + 1))}
    report["checks"]["pi1_bound_zero_step"] = {
        "ok": all(c0[i] <= (pi1_b + zero_step)[i] for i in range(max_order + 1))}
    # pi^(n) <= M^(n)(x, x), coefficientwise through exact series
    ok_m = True
    viol = []
    for n in range(2, max_order + 1):
        Mdiag = saw_M_series(sigma, n)
        for x, v in pis[n].entries.items():
            b = Mdiag.get(x, ActivityPoly.zero(max_order))
            if any(v[i] > b[i] for i in range(max_order + 1)):
                ok_m = False
                viol.append((n, x))
    report["checks"]["pin_le_M"] = {"ok": ok_m, "violations": viol[:10]}
    # pointwise at sampled p
    pts = {}
    for p in p_values:
        good = True
        for n in range(2, max_order + 1):
            Mdiag = saw_M_series(sigma, n)
            for x, v in pis[n].entries.items():
                if v(p) > Mdiag.get(x, ActivityPoly.zero(max_order))(p):
                    good = False
        pts[str(p)] = good
    report["checks"]["pin_le_M_sampled"] = {"ok": all(pts.values()), "points": pts}
    report["ok"] = all(c["ok"] for name, c in report["checks"].items() if name != "pi1_bound"
                       or kernel.weight(origin) == 0)
    return report


# ---------------------------------------------------------------- z variable, Pi_z

def z_series(model: str, kernel: StepKernel, max_order: int) -> ActivityPoly:
    """z = p a_p as a series in p."""
    return a_series(model, kernel, max_order).shift(1)


def pi_z_series(model: str, kernel: StepKernel, max_order: int,
                psi: SiteSeries | None = None) -> SiteSeries:
    """Pi_z(x) = psi_p(x)/a_p with p = p(z) by series reversion."""
    model = model.upper()
    if model == "RW":
        return SiteSeries(kernel, "PI", max_order, kernel.L * max_order, {}, "z")
    psi = psi_total(model, kernel, max_order) if psi is None else psi
    a = a_series(model, kernel, max_order)
    inv_a = a.inverse()
    if model == "SAW":
        pz = ActivityPoly.monomial(1, 1, max_order)
    else:
        pz = z_series(model, kernel, max_order).reversion()
    out = {}
    for x, v in psi.entries.items():
        w = (v * inv_a).compose(pz)
        if not w.is_zero():
            out[x] = w
    return SiteSeries(kernel, "PI", max_order, psi.radius, out, "z")


# ---------------------------------------------------------------- expansion coefficients

@dataclass
class ExpansionCoefficients:
    Pi_hat0: ActivityPoly
    second_moment: ActivityPoly
    z: Fraction
    lam: Fraction
    mu: Fraction
    E: dict
    E_field: ScalarField | None = None

    def moment_sums(self):
        s0 = sum(self.E.values(), Fraction(0))
        s2 = sum((sum(c * c for c in x) * v for x, v in self.E.items()), Fraction(0))
        return s0, s2


def build_expansion_coefficients(model: str, kernel: StepKernel, series: SiteSeries | None, z,
                                 max_order: int | None = None, torus: Torus | None = None) -> ExpansionCoefficients:
    """lambda_z, mu_z and E_z = (delta - mu D) - lambda [delta - z D*(delta + Pi_z)].

    ``series`` is Pi_z as a series in z (from :func:`pi_z_series`); for RW
    pass ``None``. All values are exact rationals.
    """
    z = Fraction(z)
    d = kernel.d
    origin = (0,) * d
    if series is None:
        series = SiteSeries(kernel, "PI", max_order or 0, 0, {}, "z")
    Pi = {x: v(z) for x, v in series.entries.items()}
    Pi = {x: v for x, v in Pi.items() if v}
    s0 = sum(Pi.values(), Fraction(0))
    s2 = sum((sum(c * c for c in x) * v for x, v in Pi.items()), Fraction(0))
    denom = 1 + z * s2 / kernel.sigma2
    if denom == 0:
        raise ZeroDivisionError("vanishing lambda denominator")
    lam = 1 / denom
    mu = 1 - lam * (1 - z - z * s0)
    E: dict = {}

    def add(x, v):
        if v:
            E[x] = E.get(x, Fraction(0)) + v

    add(origin, 1 - lam)
    for e, w in kernel.weights.items():
        add(e, -mu * w)
    # + lambda z D*(delta + Pi)
    base = dict(Pi)
    base[origin] = base.get(origin, Fraction(0)) + 1
    for y, v in base.items():
        for e, w in kernel.weights.items():
            add(tuple(a + b for a, b in zip(y, e)), lam * z * w * v)
    E = {x: v for x, v in E.items() if v}
    field_ = None
    if torus is not None:
        vals = np.zeros(torus.shape)
        for x, v in E.items():
            vals[torus.index(x)] += float(v)
        field_ = ScalarField(torus, vals, "series-evaluated", True)
    return ExpansionCoefficients(series.total(), series.second_moment(), z, lam, mu, E, field_)


def E_hat(coeffs: ExpansionCoefficients, momenta) -> np.ndarray:
    ks = np.atleast_2d(np.asarray(momenta, dtype=float))
    xs = np.array(list(coeffs.E), dtype=float)
    vs = np.array([float(v) for v in coeffs.E.values()])
    return np.cos(ks @ xs.T) @ vs


def E_hat_small_k_exponent(coeffs: ExpansionCoefficients, d: int, kmin=1e-3, kmax=5e-2, n=20) -> float:
    """Local exponent of |E-hat(k)| along the first axis (expected 4)."""
    r = np.geomspace(kmin, kmax, n)
    ks = np.zeros((n, d))
    ks[:, 0] = r
    v = np.abs(E_hat(coeffs, ks))
    slope = np.polyfit(np.log(r), np.log(v), 1)[0]
    return float(slope)


# ---------------------------------------------------------------- critical point

def _zc_polynomial(model, kernel, max_order, pi_z=None) -> ActivityPoly:
    """F(z) = 1 - z - z sum_x Pi_z(x), truncated at max_order + 1 in z."""
    if model.upper() == "RW":
        return ActivityPoly([1, -1], max_order + 1)
    pi_z = pi_z_series(model, kernel, max_order) if pi_z is None else pi_z
    tot = pi_z.total()
    coeffs = [Fraction(1), -1 - tot[0]] + [-tot[i] for i in range(1, max_order + 1)]
    return ActivityPoly(coeffs, max_order + 1)


def critical_estimate(model: str, kernel: StepKernel, max_order: int, pi_z: SiteSeries | None = None,
                      tol: Fraction = Fraction(1, 10 ** 12)) -> dict:
    """Root of the truncated critical equation and a ratio estimate.

    The root is bracketed from z = 0 upward in steps of 1/|Omega_D| and then
    refined by exact bisection. The ratio estimate is chi_n / chi_{n+1} from
    the last two susceptibility coefficients of the two-point series.
    """
    model = model.upper()
    F = _zc_polynomial(model, kernel, max_order, pi_z)
    step = Fraction(1, len(kernel.weights))
    lo, hi = Fraction(0), None
    z = step
    while z <= 4:
        if F(z) <= 0:
            hi = z
            break
        lo = z
        z += step
    report = {"model": model, "max_order": max_order}
    if hi is None:
        report.update({"zc_root": None, "status": "inconclusive"})
    elif F(hi) == 0:
        report.update({"zc_root": float(hi), "zc_root_exact": hi, "status": "ok"})
    else:
        while hi - lo > tol:
            mid = (lo + hi) / 2
            if F(mid) > 0:
                lo = mid
            else:
                hi = mid
        report.update({"zc_root": float((lo + hi) / 2), "status": "ok"})
    chi = two_point_series(model, kernel, max_order).total() if model != "RW" else None
    if chi is not None and chi[max_order] and chi[max_order - 1]:
        # successive susceptibility coefficients, in units of the activity p
        report["ratio_estimate"] = float(chi[max_order - 1] / chi[max_order])
    else:
        report["ratio_estimate"] = 1.0 if model == "RW" else None
    return report


# ---------------------------------------------------------------- spectral form

def spectral_two_point(model: str, kernel: StepKernel, pi_z: SiteSeries | None, z, momenta) -> dict:
    """F-hat_z(k) = 1 - z D-hat(k) (1 + Pi-hat_z(k)) and G-hat = (1 + Pi-hat)/F-hat."""
    ks = np.atleast_2d(np.asarray(momenta, dtype=float))
    zf = float(z)
    if pi_z is None or not pi_z.entries:
        pihat = np.zeros(len(ks))
    else:
        xs = np.array(list(pi_z.entries), dtype=float)
        vs = np.array([float(v(Fraction(z))) for v in pi_z.entries.values()])
        pihat = np.cos(ks @ xs.T) @ vs
    dhat = kernel_fourier(kernel, ks)
    F = 1.0 - zf * dhat * (1.0 + pihat)
    G = (1.0 + pihat) / F
    return {"F_hat": F, "G_hat": G, "Pi_hat": pihat, "positive": bool(np.all(F > 0) and np.all(G > 0)),
            "flag_critical": bool(np.any(F <= 0))}
