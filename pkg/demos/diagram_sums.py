"""Bubble, triangle and square sums of power-law lines in d = 3.

Run: python3 demos/diagram_sums.py
"""
from lacekit.diagrams import condition_sums_power_law

for q in (1.6, 2.2, 2.9):
    r = condition_sums_power_law(q, 3, 48)
    flags = {k: round(v["increment_ratio"], 3) for k, v in r["diagnostics"].items()}
    print(f"q={q}: increment ratios {flags}")
