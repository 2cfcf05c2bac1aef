"""One test per acceptance criterion.

Each test prints an ``ACCEPTANCE nn PASS|FAIL`` line with the measured
quantities before asserting, so the summary section of a pytest run lists
all eleven outcomes.
"""
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from lacekit import diagrams as dg
from lacekit import enumerate as en
from lacekit import greens as gr
from lacekit import laces
from lacekit import perc_exact as pe
from lacekit import perc_mc as mc
from lacekit.lattice import Torus, build_kernel, decay_convolution_check, main_term_check


def test_c01_saw_identity(acceptance_line):
    t0 = time.time()
    r = en.verify_expansion_identity("SAW", build_kernel("uniform", L=1, d=2), 6, radius=6)
    dt = time.time() - t0
    ok = r.ok and dt <= 600
    acceptance_line(1, ok, f"SAW d=2 L=1 orders<=6 |x|<=6: exact={r.ok} sites={r.sites_checked} {dt:.1f}s")
    assert ok


def test_c02_lt_la_identity(acceptance_line):
    t0 = time.time()
    lt = en.verify_expansion_identity("LT", build_kernel("uniform", L=1, d=2), 4)
    t1 = time.time()
    la = en.verify_expansion_identity("LA", build_kernel("uniform", L=2, d=1), 4)
    t2 = time.time()
    ok = lt.ok and la.ok and t1 - t0 <= 900 and t2 - t1 <= 900
    acceptance_line(2, ok, f"LT d=2 L=1: exact={lt.ok} ({t1 - t0:.1f}s); LA d=1 L=2: exact={la.ok} ({t2 - t1:.1f}s)")
    assert ok


@pytest.mark.slow
def test_c03_percolation_identity(acceptance_line):
    t0 = time.time()
    parts = {"single-bond N=0": pe.verify_perc_expansion(pe.single_bond(), N=0).ok}
    line = pe.line_graph(5, 2)
    assert (line.ns, line.nb) == (5, 7)
    for N in (0, 1, 2):
        parts[f"line N={N}"] = pe.verify_perc_expansion(line, N=N).ok
    box = pe.box_graph(3, 1, 2)
    assert box.nb <= 20
    for N in (0, 1):
        parts[f"box3x3 N={N}"] = pe.verify_perc_expansion(box, N=N).ok
    dt = time.time() - t0
    ok = all(parts.values()) and dt <= 1800
    acceptance_line(3, ok, " ".join(f"[{k}: {v}]" for k, v in parts.items()) + f" total {dt:.0f}s")
    assert ok


def test_c04_lace_algebra(acceptance_line):
    rng = random.Random(2024)
    bad_real = bad_exact = 0
    for exact in (False, True):
        for _ in range(1000):
            b = rng.randint(1, 8)
            res = laces.verify_JK(laces.UMatrix.random(b, rng, exact=exact), b, tol=1e-12)
            if not res:
                if exact:
                    bad_exact += 1
                else:
                    bad_real += 1
    n1 = {len(laces.enumerate_laces((0, n), 1)) for n in range(1, 9)}
    n2 = len(laces.enumerate_laces((0, 3), 2))
    ok = bad_real == 0 and bad_exact == 0 and n1 == {1} and n2 == 3
    acceptance_line(4, ok, f"JK failures real={bad_real}/1000 rational={bad_exact}/1000; "
                           f"|L1|={sorted(n1)} |L2[0,3]|={n2}")
    assert ok


def test_c05_green_asymptotics(acceptance_line):
    t0 = time.time()
    k = build_kernel("uniform", L=2, d=3)
    res = gr.greens_torus(k, 1, Torus(3, 128), image_correct=True)
    rat = gr.asymptote_ratios(res, 8, 20)
    dt = time.time() - t0
    x = (12, 5, 3)
    closed = gr.gaussian_tail_integral(x, 3, float(k.sigma2), 0.0)
    quad = gr.gaussian_tail_quadrature(x, 3, float(k.sigma2), 0.0)
    comp = abs(closed - quad) / closed
    inside = (rat["min"] >= 0.9) and (rat["max"] <= 1.1)
    ok = inside and dt <= 300 and comp <= 1e-8
    acceptance_line(5, ok, f"ratio range [{rat['min']:.4f}, {rat['max']:.4f}] over 8<=|x|<=20 vs [0.90, 1.10]; "
                           f"{dt:.1f}s; closed form vs quadrature rel {comp:.1e}")
    assert ok


def test_c06_bound_suite(acceptance_line):
    rng = np.random.default_rng(6)
    ld_ok, pts, worst = True, 0, -math.inf
    for d in (1, 2, 3):
        for L in (1, 2):
            xs = [tuple(int(c) for c in rng.integers(-12, 13, d)) for _ in range(100)]
            r = gr.large_deviation_check(build_kernel("uniform", L=L, d=d), np.geomspace(0.1, 20, 10), xs, 1e-10)
            ld_ok &= r["ok"]
            pts += r["points"]
            worst = max(worst, r["max_excess"])
    k = build_kernel("uniform", L=2, d=3)
    xs = []
    while len(xs) < 20:
        x = tuple(int(c) for c in rng.integers(-20, 21, 3))
        if 2 <= math.sqrt(sum(c * c for c in x)) <= 20:
            xs.append(x)
    st = gr.small_time_bound_check(k, xs, Torus(3, 64))
    held = sum(r["holds"] for r in st["rows"])
    ok = ld_ok and st["ok"]
    acceptance_line(6, ok, f"large deviations: {pts} points ok={ld_ok} max excess {worst:.2e}; "
                           f"small-time tail bound holds at {held}/20 x (worst S</bound {st['worst_ratio']:.3g})")
    assert ok


def test_c07_moment_cancellation(acceptance_line):
    k = build_kernel("uniform", L=1, d=2)
    pz = en.pi_z_series("SAW", k, 5)
    rows = []
    for z in (Fraction(1, 20), Fraction(1, 10)):
        c = en.build_expansion_coefficients("SAW", k, pz, z)
        rows.append((z, c.moment_sums(), en.E_hat_small_k_exponent(c, 2)))
    ok = all(m == (0, 0) and e > 0 for _, m, e in rows)
    acceptance_line(7, ok, "; ".join(f"z={z}: sums={tuple(str(v) for v in m)} local exponent {e:.3f}" for z, m, e in rows))
    assert ok


def test_c08_convolution_bounds(acceptance_line):
    box = Torus(3, 32)
    r1 = decay_convolution_check(4.0, 2.5, box)
    r2 = decay_convolution_check(2.5, 2.0, box)
    m1 = main_term_check(1.0, box)
    m3 = main_term_check(3.0, box)
    changes = [r1["relative_change"], r2["relative_change"], m1["relative_change"], m3["relative_change"]]
    ok = all(c <= 0.2 for c in changes) and r1["finite"] and r2["finite"]
    acceptance_line(8, ok, "constant drift 32->64: a>d {:.3f}, a<d<a+b {:.3f}, main-term s=1 {:.3f}, s=3 {:.3f} (<= 0.20)"
                    .format(*changes))
    assert ok


@pytest.mark.slow
def test_c09_diagram_suite(acceptance_line):
    s = dg.open_diagram_S(2.8, 1.4, 3, 48)
    s_ok = math.isfinite(s["Sbar"]) and s["relative_change"] <= 0.25
    growth = {}
    for model, side in (("SAW", 12), ("LT", 12), ("LA", 12), ("PERC", 8)):
        r = dg.m_recursion(dg.power_law_spec(model, Torus(3, side), 2.8), 4)
        rat = r["growth_ratio"]
        change = abs(rat[4] / rat[3] - 1)
        growth[model] = (all(math.isfinite(v) for v in rat.values()) and r["nonnegative"] and change <= 0.25, change)
    k = build_kernel("uniform", L=1, d=2)
    dom = {}
    for model in ("SAW", "LT"):
        ce = en.critical_estimate(model, k, 4)
        p = Fraction(ce["ratio_estimate"] / 2).limit_denominator(1000)
        if model == "SAW":
            pc = en.pi_decomposition_check(k, 4, (p,))["checks"]
            dom[model] = all(pc[c]["ok"] for c in ("psi_le_pi_convolutions", "pi1_bound_zero_step",
                                                  "pin_le_M", "pin_le_M_sampled"))
        else:
            dom[model] = dg.lt_la_domination("LT", k, 4, p)["ok"]
    ok = s_ok and all(g for g, _ in growth.values()) and all(dom.values())
    acceptance_line(9, ok, f"Sbar={s['Sbar']:.2f} constant drift {s['relative_change']:.3f} (<= 0.25); "
                    + " ".join(f"{m} growth drift {c:.3f}" for m, (_, c) in growth.items())
                    + f"; domination {dom}")
    assert ok


def test_c10_mc_vs_oracle(acceptance_line):
    graphs = {"single-bond": pe.single_bond(), "line": pe.line_graph(5, 2),
              "parallel": pe.parallel_paths(Fraction(1, 2)), "box3x3": pe.box_graph(3, 1, 2)}
    res = {n: mc.oracle_comparison(g, (0.2, 0.4, 0.6), 100_000, seed=1) for n, g in graphs.items()}
    worst = {n: max(abs(r["mc"] - r["exact"]) / r["sigma"] if r["sigma"] > 0 else 0.0 for r in v["rows"])
             for n, v in res.items()}
    g = graphs["box3x3"]
    a = mc.estimate_graph_two_point(g, 0.4, 20_000, 10, workers=1)["counts"]
    b = mc.estimate_graph_two_point(g, 0.4, 20_000, 10, workers=2)["counts"]
    same = bool(np.array_equal(a, b))
    ok = all(v["ok"] for v in res.values()) and same
    acceptance_line(10, ok, " ".join(f"{n}: max {w:.2f} sigma" for n, w in worst.items())
                    + f"; workers 1 vs 2 bit-identical={same}")
    assert ok


def test_c11_critical_trend(acceptance_line):
    roots = []
    for L, order in ((1, 4), (2, 4), (3, 3)):
        roots.append(en.critical_estimate("SAW", build_kernel("uniform", L=L, d=2), order)["zc_root"])
    rw = en.critical_estimate("RW", build_kernel("uniform", L=1, d=2), 4)["zc_root_exact"]
    ok = roots[0] > roots[1] > roots[2] and rw == 1
    acceptance_line(11, ok, f"SAW zc_root L=1,2,3: {', '.join(f'{r:.4f}' for r in roots)}; RW root {rw}")
    assert ok
