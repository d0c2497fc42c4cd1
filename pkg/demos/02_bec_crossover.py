"""Markovian-to-non-Markovian crossover of a qubit immersed in a condensate.

For each dimension the background scattering length is scanned and the
value where backflow first appears is located.
"""

import numpy as np

from nmprobe import bec

for D in (3, 2, 1):
    res = bec.crossover_scan(D, np.linspace(0.01, bec.MAX_A_B_RATIO[D], 12))
    print(f"{D}D: a_B_crit = {res.a_crit_over_aRb:.4f} a_Rb")
    for p in res.points:
        print(f"   a_B = {p.a_B_over_aRb:6.3f} a_Rb   measure {p.measure:.3e}   Gamma_inf {p.Gamma_inf:.4f}")

p = bec.default_reservoir(1)
t = np.linspace(0.0, 4 * bec.DEFAULT_T_MAX, 9)
dw = bec.decoherence_trajectory(p, t).values
aqd = bec.decoherence_trajectory(p, t, "aqd").values
print("\n1D, a_B = a_Rb: double well vs atomic quantum dot")
for row in zip(t, dw, aqd):
    print("   t = {:6.2f}   Gamma_dw {:.4f}   Gamma_aqd {:.4f}".format(*row))
