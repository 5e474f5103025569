"""Idle-time gap between regular and pipelined Parareal versus the cost ratio.

The event simulator is the ground truth; the closed form predicts a gap that
falls like 1/r.  The table shows both, and the fit of the simulated gap.

    python3 demos/idle_time_law.py
"""
from __future__ import annotations

from pint_swimmer import costmodel as cm
from pint_swimmer.experiments import gap_simulated

n, l = 8, 3
for m, ratios in ((2, (2, 5, 8)), (4, (4, 10, 16))):
    rows, (slope, intercept, r2), pts = gap_simulated(m, ratios, n=n, l=l)
    print(f"m = {m}: gap = {slope:.2f} / r + {intercept:.3f}   (R^2 = {r2:.4f})")
    print("    r   simulated   closed form")
    for (inv_r, gap) in pts:
        r = 1 / inv_r
        print(f"  {r:4.0f}   {gap:9.3f}   {cm.delta_w(cm.CostInputs(n, m, l, float(n), r)):11.3f}")
    print()
