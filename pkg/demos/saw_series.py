"""Exact self-avoiding walk series on the king lattice and the expansion identity.

Run: python3 demos/saw_series.py
"""
from lacekit.enumerate import critical_estimate, two_point_series, verify_expansion_identity
from lacekit.lattice import build_kernel

k = build_kernel("uniform", L=1, d=2)
chi = two_point_series("SAW", k, 6).total()
print("susceptibility coefficients (times 9^n):", [int(chi[n] * 9 ** n) for n in range(7)])

rep = verify_expansion_identity("SAW", k, 6, radius=6)
print(f"expansion identity exact through order 6 at {rep.sites_checked} sites: {rep.ok}")

for L in (1, 2, 3):
    order = 4 if L < 3 else 3
    ce = critical_estimate("SAW", build_kernel("uniform", L=L, d=2), order)
    print(f"L={L}: root of the truncated critical equation {ce['zc_root']:.5f}")
