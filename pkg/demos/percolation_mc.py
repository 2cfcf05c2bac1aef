"""Monte Carlo bond percolation against exact connection polynomials.

Run: python3 demos/percolation_mc.py
"""
from fractions import Fraction

from lacekit.perc_exact import exact_two_point, parallel_paths
from lacekit.perc_mc import estimate_graph_two_point

g = parallel_paths(Fraction(1, 2))
tau = exact_two_point(g, 0, 1)
print("exact tau(0, 1) =", " + ".join(f"({c}) p^{i}" for i, c in enumerate(tau.coeffs) if c))
for p in (0.4, 0.8, 1.2):
    mc = estimate_graph_two_point(g, p, 200_000, seed=5)
    print(f"p={p}: exact {float(tau(Fraction(p))):.5f}  estimate {mc['tau'][1]:.5f} +- {mc['stderr'][1]:.5f}")
