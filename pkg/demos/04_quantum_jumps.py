"""Quantum-jump trajectories against the master equation for spontaneous decay."""

import numpy as np

from nmprobe.core import SIGMA_MINUS, ket_to_rho
from nmprobe.mcwf import EnsembleConfig, JumpChannel, ensemble_average, lindblad_integrate, waiting_times

grid = np.linspace(0.0, 5.0, 11)
psi0 = np.array([1, 0], dtype=complex)
channel = JumpChannel(SIGMA_MINUS, 1.0)
H = np.zeros((2, 2))

res = ensemble_average(EnsembleConfig(10_000, 0.005, seed=1), H, channel, psi0, grid)
ref = lindblad_integrate(H, channel, ket_to_rho(psi0), grid)
print("   t   trajectories     stderr   master eq.")
for t, a, se, b in zip(grid, res.rho[:, 0, 0].real, res.stderr00, ref[:, 0, 0].real):
    print(f"{t:4.1f}   {a:.4f}        {se:.4f}     {b:.4f}")
w = waiting_times(res.jumps)
print(f"\n{w.size} jumps, mean waiting time {w.mean():.3f} (conditioned on t <= 5)")
