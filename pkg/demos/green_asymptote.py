"""Random-walk Green's function on a torus against its Gaussian asymptote.

Run: python3 demos/green_asymptote.py
"""
import numpy as np

from lacekit.greens import asymptote_ratios, greens_torus
from lacekit.lattice import Torus, build_kernel

k = build_kernel("uniform", L=2, d=3)
res = greens_torus(k, 1, Torus(3, 64), image_correct=True)
rat = asymptote_ratios(res, 4, 24)
for r0 in (4, 8, 12, 16, 20, 24):
    sel = np.abs(rat["radius"] - r0) < 0.5
    if sel.any():
        print(f"|x| ~ {r0:2d}: S sigma^2 (|x|+1) / a_3 in [{rat['ratio'][sel].min():.4f}, {rat['ratio'][sel].max():.4f}]")
