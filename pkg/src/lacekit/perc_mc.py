"""Monte Carlo bond percolation with spread-out bonds.

Each bond {x, x+e} is occupied with probability p D(e). Trial ``t`` reads its
uniforms from a Philox stream keyed by the seed, starting at counter block
``t * ceil(n_bonds / 4)``; bond ``i`` uses the i-th uniform. Every uniform is
therefore a function of (seed, trial, bond index) alone, so any split of the
trials across workers reproduces the same integer tallies. A bond is open
when its uniform is below its probability, which couples all p monotonically.
"""
from __future__ import annotations

import math
import os
from fractions import Fraction
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numpy.random import Generator, Philox

from .lattice import ScalarField, StepKernel, Torus
from .errors import GuardError
from .perc_exact import FiniteGraph

MAX_MC_BONDS = 20_000_000
CHUNK_BYTES = 64 * 2 ** 20
WORKERS_ENV = "LACEKIT_WORKERS"


def default_workers() -> int:
    """Worker count from the LACEKIT_WORKERS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class McConfig:
    """Parameters of a torus Monte Carlo run."""

    kernel: StepKernel
    torus: Torus
    p: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.p < 0 or self.p * float(self.kernel.max_weight) > 1 + 1e-12:
            raise ValueError("need 0 <= p <= 1 / max D")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.torus.d != self.kernel.d:
            raise ValueError("kernel and torus dimensions differ")


@dataclass(frozen=True, eq=False)
class McEstimate:
    """Estimated two-point function with binomial standard errors.

    ``chi`` is the mean size of the origin's cluster and ``chi_err`` its
    standard error. ``counts`` are the raw per-site tallies.
    """

    field: ScalarField
    stderr: ScalarField
    chi: float
    chi_err: float
    trials: int
    counts: np.ndarray = field(repr=False)


# ------------------------------------------------------------------ bonds

def torus_bonds(kernel: StepKernel, torus: Torus):
    """Endpoints and D-weights of all torus bonds, site-major then offset.

    Each unordered bond appears once: offsets are restricted to the
    lexicographically positive half of the kernel support.
    """
    if torus.side <= 2 * kernel.L:
        raise ValueError("torus side must exceed 2L")
    offs = [e for e in kernel.support if any(e) and e > tuple(-c for c in e)]
    nb = torus.volume * len(offs)
    if nb > MAX_MC_BONDS:
        raise GuardError(f"{nb} bonds exceed the Monte Carlo limit {MAX_MC_BONDS}")
    idx = np.arange(torus.volume).reshape(torus.shape)
    ea, eb, w = [], [], []
    for e in offs:
        shifted = idx
        for ax, c in enumerate(e):
            shifted = np.roll(shifted, -c, axis=ax)
        ea.append(idx.ravel())
        eb.append(shifted.ravel())
        w.append(np.full(torus.volume, float(kernel.weights[e])))
    order = lambda a: np.stack(a, axis=1).ravel()  # noqa: E731 (site-major)
    return order(ea).astype(np.int64), order(eb).astype(np.int64), order(w)


def graph_bonds(g: FiniteGraph):
    ea = np.array([a for a, _, _ in g.bonds], dtype=np.int64)
    eb = np.array([b for _, b, _ in g.bonds], dtype=np.int64)
    w = np.array([float(wt) for _, _, wt in g.bonds])
    return ea, eb, w


# ------------------------------------------------------------------ kernels

@njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True)
def _tally(u, ea, eb, probs, ns, origin, counts, size1, size2):
    """Add origin-cluster indicators for each trial row of u and each p row of probs."""
    parent = np.empty(ns, dtype=np.int64)
    nb = ea.shape[0]
    for tr in range(u.shape[0]):
        for j in range(probs.shape[0]):
            for s in range(ns):
                parent[s] = s
            for i in range(nb):
                if u[tr, i] < probs[j, i]:
                    a = _find(parent, ea[i])
                    b = _find(parent, eb[i])
                    if a != b:
                        parent[a] = b
            r = _find(parent, origin)
            n = 0
            for s in range(ns):
                if _find(parent, s) == r:
                    counts[j, s] += 1
                    n += 1
            size1[j] += n
            size2[j] += n * n


def _block(nb: int) -> int:
    return (nb + 3) // 4


def trial_uniforms(seed: int, start: int, n: int, nb: int) -> np.ndarray:
    """Uniforms of trials start..start+n-1, one row per trial (padded to a 4-multiple)."""
    B = _block(nb)
    gen = Generator(Philox(key=int(seed), counter=[start * B, 0, 0, 0]))
    return gen.random((n, 4 * B))


def _run_range(args):
    seed, start, stop, ea, eb, probs, ns, origin = args
    nb = ea.shape[0]
    counts = np.zeros((probs.shape[0], ns), dtype=np.int64)
    s1 = np.zeros(probs.shape[0], dtype=np.int64)
    s2 = np.zeros(probs.shape[0], dtype=np.int64)
    chunk = max(1, CHUNK_BYTES // (8 * 4 * _block(nb)))
    t = start
    while t < stop:
        n = min(chunk, stop - t)
        u = trial_uniforms(seed, t, n, nb)
        _tally(u, ea, eb, probs, ns, origin, counts, s1, s2)
        t += n
    return counts, s1, s2


def run_trials(ea, eb, probs, ns: int, origin: int, trials: int, seed: int, workers: int | None = None):
    """Integer tallies over ``trials`` for each row of ``probs``.

    Returns (counts[p, site], sum of cluster sizes[p], sum of squared sizes[p]).
    The trials are split into contiguous ranges, one per worker; the result
    does not depend on the split.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    workers = default_workers() if workers is None else max(1, int(workers))
    workers = min(workers, trials)
    edges = [trials * i // workers for i in range(workers + 1)]
    jobs = [(seed, edges[i], edges[i + 1], ea, eb, probs, ns, origin) for i in range(workers)]
    if workers == 1:
        parts = [_run_range(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_range, jobs))
    counts = sum(p[0] for p in parts)
    s1 = sum(p[1] for p in parts)
    s2 = sum(p[2] for p in parts)
    return counts, s1, s2


def _binomial(counts, trials):
    est = counts / trials
    err = np.sqrt(est * (1 - est) / trials)
    return est, err


def _chi(s1, s2, trials):
    mean = s1 / trials
    var = np.maximum(s2 / trials - mean ** 2, 0.0)
    return mean, np.sqrt(var / trials)


# -------------------------------------------------------------- operations

def sample_clusters(cfg: McConfig, trials: range | None = None):
    """Yield (trial, labels) with ``labels[site]`` the root of its cluster.

    The labels are reshaped to the torus; two sites share a cluster iff their
    labels agree.
    """
    ea, eb, w = torus_bonds(cfg.kernel, cfg.torus)
    probs = cfg.p * w
    ns = cfg.torus.volume
    for t in (trials if trials is not None else range(cfg.trials)):
        u = trial_uniforms(cfg.seed, t, 1, ea.shape[0])[0, : ea.shape[0]]
        yield t, _labels(u < probs, ea, eb, ns).reshape(cfg.torus.shape)


@njit(cache=True)
def _labels_nb(open_, ea, eb, ns):
    parent = np.arange(ns)
    for i in range(ea.shape[0]):
        if open_[i]:
            a = _find(parent, ea[i])
            b = _find(parent, eb[i])
            if a != b:
                parent[a] = b
    out = np.empty(ns, dtype=np.int64)
    for s in range(ns):
        out[s] = _find(parent, s)
    return out


def _labels(open_, ea, eb, ns):
    return _labels_nb(np.ascontiguousarray(open_), ea, eb, ns)


def estimate_two_point(cfg: McConfig, workers: int | None = None) -> McEstimate:
    """tau_p(x) estimated as the fraction of trials with x in the origin's cluster."""
    ea, eb, w = torus_bonds(cfg.kernel, cfg.torus)
    counts, s1, s2 = run_trials(ea, eb, cfg.p * w, cfg.torus.volume, 0, cfg.trials, cfg.seed, workers)
    return _estimate(cfg.torus, counts[0], s1[0], s2[0], cfg.trials)


def _estimate(torus, counts, s1, s2, trials):
    est, err = _binomial(counts, trials)
    chi, chi_err = _chi(s1, s2, trials)
    f = ScalarField(torus, est.reshape(torus.shape), "mc")
    e = ScalarField(torus, err.reshape(torus.shape), "mc")
    return McEstimate(f, e, float(chi), float(chi_err), trials, counts.reshape(torus.shape))


def triangle(field: ScalarField) -> float:
    """sum_{x,y} f(x) f(y-x) f(-y) via two spectral convolutions."""
    v = field.values
    fv = np.fft.fftn(v)
    ff = np.fft.ifftn(fv * fv).real  # (f*f)(y)
    return float(np.sum(ff * field.reflected()))


def susceptibility_scan(kernel: StepKernel, torus: Torus, p_grid, trials: int, seed: int,
                        fraction: float = 0.1, workers: int | None = None) -> dict:
    """chi(p) and triangle(p) on a p-grid from one set of coupled samples.

    ``pc_proxy`` is the first grid point where chi reaches ``fraction`` of
    the torus volume (None if never reached).
    """
    p_grid = [float(p) for p in p_grid]
    for p in p_grid:
        McConfig(kernel, torus, p, trials, seed)
    ea, eb, w = torus_bonds(kernel, torus)
    probs = np.array([p * w for p in p_grid])
    counts, s1, s2 = run_trials(ea, eb, probs, torus.volume, 0, trials, seed, workers)
    rows, pc = [], None
    for j, p in enumerate(p_grid):
        est = _estimate(torus, counts[j], s1[j], s2[j], trials)
        rows.append({"p": p, "chi": est.chi, "chi_err": est.chi_err, "triangle": triangle(est.field)})
        if pc is None and est.chi >= fraction * torus.volume:
            pc = p
    return {"rows": rows, "pc_proxy": pc, "fraction": fraction, "trials": trials, "seed": seed}


def rw_domination(est: McEstimate, kernel: StepKernel, p: float) -> dict:
    """Compare tau-hat with the walk bound S_mu at mu = p (1 - D(0)).

    Every open path is a walk with nonzero steps of weight p D(e), so
    tau_p <= S_mu for the kernel with the origin removed. Reports the largest
    excess in standard errors (sites with zero error use the raw excess).
    """
    from .greens import greens_torus
    from .lattice import build_kernel

    d0 = float(kernel.weight((0,) * kernel.d))
    mu = p * (1 - d0)
    if mu >= 1:
        raise ValueError("walk bound needs p (1 - D(0)) < 1")
    k_no0 = kernel
    if d0 > 0:
        k_no0 = build_kernel(kernel.profile, kernel.L, kernel.d, exclude_origin=True)
    S = greens_torus(k_no0, mu, est.field.torus).field.values
    diff = est.field.values - S
    err = est.stderr.values
    z = np.where(err > 0, diff / np.where(err > 0, err, 1), np.where(diff > 1e-12, np.inf, -np.inf))
    return {"mu": mu, "max_z": float(z.max()), "max_excess": float(diff.max()), "ok": bool(z.max() <= 3.0)}


def symmetry_check(est: McEstimate) -> float:
    """Largest |raw - symmetrized| / stderr over sites, symmetrizing under axis reflections and permutations."""
    import itertools

    v = est.field.values
    d = v.ndim
    imgs = []
    for perm in itertools.permutations(range(d)):
        w = np.transpose(v, perm)
        for flips in itertools.product((False, True), repeat=d):
            u = w
            for ax, fl in enumerate(flips):
                if fl:
                    u = np.roll(np.flip(u, axis=ax), 1, axis=ax)
            imgs.append(u)
    sym = np.mean(imgs, axis=0)
    err = est.stderr.values
    z = np.abs(v - sym) / np.where(err > 0, err, np.inf)
    return float(z.max())


# ------------------------------------------------- finite graph estimates

def estimate_graph_two_point(g: FiniteGraph, p: float, trials: int, seed: int,
                             workers: int | None = None) -> dict:
    """Monte Carlo connection probabilities from the origin on a finite graph.

    Bond (a, b, w) is open with probability p w. Returns the estimates and
    binomial standard errors per site, in site order.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    ea, eb, w = graph_bonds(g)
    if np.any(p * w > 1 + 1e-12):
        raise ValueError("p w exceeds 1 on some bond")
    counts, _, _ = run_trials(ea, eb, p * w, g.ns, g.origin, trials, seed, workers)
    est, err = _binomial(counts[0], trials)
    return {"sites": list(g.sites), "tau": est, "stderr": err, "counts": counts[0], "trials": trials}


def oracle_comparison(g: FiniteGraph, p_values=(0.2, 0.4, 0.6), trials: int = 100_000,
                      seed: int = 1, workers: int | None = None, nsigma: float = 3.0) -> dict:
    """Compare Monte Carlo estimates with the exact connection polynomials.

    A site passes when |tau-hat - tau| <= nsigma * sigma, with sigma the
    binomial error at the exact value (zero only when tau is 0 or 1, in
    which case exact agreement is required).
    """
    from .perc_exact import two_point_all

    polys = two_point_all(g, g.origin)
    rows = []
    for p in p_values:
        mc = estimate_graph_two_point(g, p, trials, seed, workers)
        for s, poly in enumerate(polys):
            exact = float(poly(Fraction(p).limit_denominator(10 ** 12)))
            sig = math.sqrt(exact * (1 - exact) / trials)
            dev = abs(float(mc["tau"][s]) - exact)
            rows.append({"p": p, "site": list(g.sites[s]),
                         "exact": exact, "mc": float(mc["tau"][s]), "sigma": sig,
                         "ok": bool(dev <= nsigma * sig) if sig > 0 else bool(dev == 0)})
    return {"ok": all(r["ok"] for r in rows), "rows": rows, "trials": trials, "seed": seed}

