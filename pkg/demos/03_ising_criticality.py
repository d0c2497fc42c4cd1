"""A qubit coupled to a transverse-field Ising chain as a criticality probe.

Prints the echo-based backflow measure across the renormalised field and
the location of its minimum for a few chain lengths.
"""

import numpy as np

from nmprobe.ising import criticality_scan, locate_minimum

grid = np.round(np.arange(0.9, 1.1 + 1e-9, 0.01), 3)
rows = criticality_scan([50, 100, 200], grid, 0.05, workers=4)
for N in (50, 100, 200):
    m = [r.measure for r in rows if r.N == N]
    print(f"N = {N}: minimum at lambda* = {locate_minimum(grid, m):.3f}")
    print("   " + " ".join(f"{x:.3f}" for x in m))
