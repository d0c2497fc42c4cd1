"""Exact pure-dephasing qubit dynamics.

Conventions used throughout (hbar = k_B = 1):

    Gamma(t) = int_0^inf J(w) coth(w/2T) (1 - cos wt) / w^2 dw
    gamma(t) = dGamma/dt = int_0^inf J(w) coth(w/2T) sin(wt) / w dw

and the coherence decays as rho_01(t) = exp(-Gamma(t)) rho_01(0).  With
this normalisation the closed-form Ohmic rates in :func:`gamma_analytic`
are exact derivatives of Gamma, and for s = 1 at zero temperature
Gamma(t) = ln(1 + wc^2 t^2) / 2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .core import (
    SIGMA_Z,
    QubitState,
    Trajectory,
    integrate,
    validate_density,
    validate_grid,
)
from .errors import DomainError
from .spectral import (
    OhmicSpectrum,
    Temperature,
    as_temperature,
    euler_gamma,
    quadrature_for,
    thermal_factor,
)


def gamma_analytic(s: float, omega_c: float, t, regime: str = "zero", T: float = 0.0):
    """Closed-form dephasing rate of the Ohmic family.

    zero:  wc (1 + (wc t)^2)^(-s/2) G(s) sin(s arctan(wc t))
    high:  2T (1 + (wc t)^2)^(-(s-1)/2) G(s-1) sin((s-1) arctan(wc t))

    ``G`` is the Euler gamma function.  The high-temperature form needs
    s > 1; at s = 1 it has a pole and is rejected rather than patched.
    """
    if not s > 0:
        raise DomainError(f"Ohmicity must be positive, got {s}")
    if not omega_c > 0:
        raise DomainError("cutoff must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be nonnegative")
    tau = omega_c * t
    phi = np.arctan(tau)
    if regime == "zero":
        out = omega_c * (1.0 + tau * tau) ** (-s / 2.0) * euler_gamma(s) * np.sin(s * phi)
    elif regime == "high":
        if not T > 0:
            raise DomainError("high-temperature rate needs T > 0")
        if s <= 1:
            raise DomainError(
                f"high-temperature rate needs s > 1: gamma(s-1) has a pole at s - 1 = {s - 1:g}"
            )
        out = 2.0 * T * (1.0 + tau * tau) ** (-(s - 1.0) / 2.0) * euler_gamma(s - 1.0) * np.sin(
            (s - 1.0) * phi
        )
    else:
        raise DomainError(f"unknown regime {regime!r}")
    return float(out) if out.ndim == 0 else out


def gamma_numeric(spec, T, t: float, tol: float | None = None) -> float:
    """Dephasing rate at a single time by adaptive quadrature.

    The integration range is split into half-period panels of width pi/t.
    Default absolute tolerance is 1e-10 times the spectrum's frequency scale.
    """
    t = float(t)
    if t < 0:
        raise DomainError("time must be nonnegative")
    if t == 0:
        return 0.0
    Tq = as_temperature(T)
    if tol is None:
        tol = 1e-10 * spec.frequency_scale

    def f(w):
        return float(spec(w) * thermal_factor(w, Tq)) * math.sin(w * t) / w

    return integrate(f, 0.0, spec.omega_max, tol, period=2.0 * math.pi / t)


def _weight(spec, T, power):
    q = quadrature_for(spec)
    w = q.nodes
    return q, spec(w) * thermal_factor(w, T) / w**power


def decoherence_factor(spec, T, grid) -> Trajectory:
    """Gamma(t) on a grid starting at 0, by direct quadrature at every time."""
    t = validate_grid(grid)
    q, g = _weight(spec, as_temperature(T), 2)
    G = q.integrate(g, t, "one_minus_cos")
    G = np.maximum(G, 0.0)
    G[t == 0] = 0.0
    return Trajectory(t, G, "Gamma")


def dephasing_rate(spec, T, grid) -> Trajectory:
    """gamma(t) on a grid from the sin-kernel quadrature (independent of Gamma)."""
    t = validate_grid(grid, start_at_zero=False)
    q, g = _weight(spec, as_temperature(T), 1)
    return Trajectory(t, q.integrate(g, t, "sin"), "gamma")


@dataclass(frozen=True)
class DephasingSolution:
    gamma_traj: Trajectory
    Gamma_traj: Trajectory
    source: object
    T: Temperature

    @property
    def grid(self) -> np.ndarray:
        return self.Gamma_traj.grid

    def consistency_error(self) -> float:
        """max |Gamma(t) - int_0^t gamma| with Simpson's rule on the grid."""
        cum = cumulative_simpson(self.gamma_traj.values, x=self.grid, initial=0.0)
        return float(np.max(np.abs(cum - self.Gamma_traj.values)))

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.grid, self.gamma_traj.values, self.Gamma_traj.values)


def solve(spec, T, grid) -> DephasingSolution:
    """Gamma and gamma on the same grid through their two independent quadratures."""
    T = as_temperature(T)
    G = decoherence_factor(spec, T, grid)
    g = dephasing_rate(spec, T, G.grid)
    return DephasingSolution(g, G, spec, T)


def write_trajectory_csv(path, t, gamma, Gamma) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# t in units of 1/omega_c; gamma in units of omega_c; Gamma dimensionless\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "gamma", "Gamma"])
        for row in zip(t, gamma, Gamma):
            w.writerow([f"{x:.12g}" for x in row])


# ---------------------------------------------------------------------------
# the channel


def apply_dephasing(rho0, Gamma_t: float) -> QubitState:
    """Multiply the coherences of ``rho0`` by exp(-Gamma)."""
    rho = rho0.rho if isinstance(rho0, QubitState) else validate_density(rho0)
    Gamma_t = float(Gamma_t)
    if not Gamma_t >= 0:
        raise DomainError(f"decoherence factor must be nonnegative, got {Gamma_t}")
    out = rho.copy()
    f = math.exp(-Gamma_t)
    out[0, 1] *= f
    out[1, 0] *= f
    return QubitState(out)


class DephasingChannel:
    """Time-indexed dephasing map built from a sampled Gamma trajectory.

    Calling it on an initial state returns the evolved density matrices on
    the trajectory's grid, shape (n_t, 2, 2).
    """

    def __init__(self, Gamma_traj: Trajectory):
        G = np.asarray(Gamma_traj.values, dtype=float)
        if np.any(G < 0):
            raise DomainError("decoherence factor must be nonnegative")
        self.grid = Gamma_traj.grid
        self._decay = np.exp(-G)

    def __call__(self, rho0) -> np.ndarray:
        rho = rho0.rho if isinstance(rho0, QubitState) else validate_density(rho0)
        out = np.broadcast_to(rho, (self.grid.size, 2, 2)).copy()
        out[:, 0, 1] *= self._decay
        out[:, 1, 0] *= self._decay
        return out


def master_equation_residual(solution: DephasingSolution, rho0, grid=None) -> float:
    """Max-norm residual of d rho/dt = gamma/2 (sz rho sz - rho) along the exact solution.

    The derivative is a fourth-order finite difference on uniform grids
    (second order otherwise), so the residual measures both the consistency
    of Gamma with gamma and the grid resolution.
    """
    t = solution.grid
    if grid is not None and (np.shape(grid) != t.shape or np.any(np.asarray(grid) != t)):
        raise DomainError("grid does not match the solution grid")
    if t.size < 3:
        raise DomainError("need at least three grid points")
    rho_t = DephasingChannel(solution.Gamma_traj)(rho0)
    drho = _time_derivative(rho_t, t)
    gam = solution.gamma_traj.values[:, None, None]
    rhs = 0.5 * gam * (SIGMA_Z @ rho_t @ SIGMA_Z - rho_t)
    return float(np.max(np.abs(drho - rhs)))


def _time_derivative(y, t):
    h = np.diff(t)
    if t.size < 5 or not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        return np.gradient(y, t, axis=0, edge_order=2)
    h = h[0]
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    # one-sided fourth-order stencils at the two ends
    c = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[0] = np.tensordot(c, y[:5], axes=1)
    d[1] = np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * h), y[:5], axes=1)
    d[-1] = -np.tensordot(c, y[::-1][:5], axes=1)
    d[-2] = -np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * h), y[::-1][:5], axes=1)
    return d


def min_rate(s: float, T: float, t_max: float = 50.0, n: int = 2001, omega_c: float = 1.0, numeric=None):
    """Minimum of gamma over (0, t_max] for the Ohmic family.

    At T = 0 the closed form is used; at T > 0 the sin-kernel quadrature
    (``numeric`` forces either choice).
    """
    t = np.linspace(0.0, t_max, n)[1:]
    if numeric is None:
        numeric = T > 0
    if numeric:
        g = dephasing_rate(OhmicSpectrum(s, omega_c), T, t).values
    else:
        g = gamma_analytic(s, omega_c, t, "zero")
    return float(np.min(g))
