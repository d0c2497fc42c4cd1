"""Where does an Ohmic-family bath start to produce information backflow?

Scans the Ohmicity s at zero and high temperature, printing the minimum
dephasing rate, the BLP measure and the convexity verdict of the
temperature-weighted spectrum.
"""

import numpy as np

from nmprobe.blp import blp_dephasing
from nmprobe.dephasing import decoherence_factor, min_rate
from nmprobe.spectral import OhmicSpectrum, is_convex

t = np.linspace(0.0, 50.0, 2001)
for T in (0.0, 100.0):
    print(f"T = {T:g} (units of omega_c)")
    print("   s   min gamma        BLP   convex")
    for s in np.round(np.arange(1.5, 3.6, 0.25), 2):
        spec = OhmicSpectrum(float(s))
        g = min_rate(float(s), T)
        N = blp_dephasing(decoherence_factor(spec, T, t)).value
        print(f"{s:5.2f} {g:+.3e} {N:.3e}   {is_convex(spec, T).convex}")
    print()
