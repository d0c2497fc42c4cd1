"""Dephasing of impurity qubits immersed in a Bose-Einstein condensate.

Physical inputs are SI (kg, m, m^-3, K).  Internally everything is
expressed in reference units of the 87Rb background gas: energies in
``E_ref = n0 * 4 pi hbar^2 a_Rb / m_B``, times in ``hbar / E_ref``, and
wavenumbers in ``1/l_ref`` with ``l_ref = hbar / sqrt(m_B E_ref)``, so that
the free dispersion is ``eps = k^2 / 2``.

Two qubits are modelled.  The double-well qubit (impurity in the left or
right well of a lattice site separated by L) and the atomic quantum dot
(internal states of a single trapped impurity).  In the continuum limit

    Gamma_dw(t)  = 8 g^2 n_D int d^Dk/(2pi)^D (eps/E) e^{-k^2 s^2/2}
                   sin^2(E t/2) / E^2 coth(E/2T) f_D(kL)
    Gamma_aqd(t) =   g^2 n_D int d^Dk/(2pi)^D (eps/E) e^{-k^2 s^2/2}
                   sin^2(E t/2) / E^2 coth(E/2T)

where ``f_D`` is sin^2(k.L) averaged over directions: sin^2(kL) in 1D,
(1 - J0(2kL))/2 in 2D and (1 - sinc(2kL))/2 in 3D.  ``g`` is the impurity
coupling reduced to D dimensions and ``n_D`` the D-dimensional density.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import optimize, special

from . import units
from .blp import modified_measure
from .core import Trajectory, geometric_edges, integrate
from .dephasing import decoherence_factor
from .errors import DomainError, NotBracketedError, ReservoirValidationError
from .spectral import TabulatedSpectrum, quadrature_for, thermal_factor

# Largest a_B / a_Rb compatible with a dilute gas in each dimension.
MAX_A_B_RATIO = {3: 3.0, 2: 2.0, 1: 1.0}
WEAK_INTERACTION_BOUND = 0.1
# Gaussian cutoff: the integrand is below 1e-13 of its peak past k sigma = 8.
K_SIGMA_MAX = 8.0
# Observation window of crossover scans, in hbar / E_ref (see README).
DEFAULT_T_MAX = 9.67
MEASURE_THRESHOLD = 1e-6
MODELS = ("double-well", "aqd")
ANGULAR = ("average", "aligned", "unity")


@dataclass(frozen=True)
class ReservoirParams:
    """Physical parameters of the condensate reservoir (SI units)."""

    m_A: float = units.MASS_NA23
    m_B: float = units.MASS_RB87
    n0: float = 1e20
    a_B: float = units.A_RB
    a_AB: float = 55.0 * units.BOHR_RADIUS
    sigma: float = 45e-9
    L: float = 600e-9 / 8
    dimension: int = 3
    a_z: float = 200e-9
    a_perp: float = 200e-9
    T: float = 0.0

    def __post_init__(self):
        for name in ("m_A", "m_B", "n0", "sigma", "L", "a_z", "a_perp"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ReservoirValidationError(f"{name} must be positive and finite, got {v!r}")
        # scattering lengths may vanish (free gas, decoupled impurity)
        for name in ("a_B", "a_AB"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ReservoirValidationError(f"{name} must be nonnegative and finite, got {v!r}")
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise ReservoirValidationError(f"T must be nonnegative, got {self.T!r}")
        if self.dimension not in (1, 2, 3):
            raise ReservoirValidationError(f"dimension must be 1, 2 or 3, got {self.dimension!r}")
        object.__setattr__(self, "dimension", int(self.dimension))
        check_reservoir(self)

    @property
    def a_B_over_aRb(self) -> float:
        return self.a_B / units.A_RB

    def with_a_B_ratio(self, ratio: float) -> "ReservoirParams":
        return replace(self, a_B=float(ratio) * units.A_RB)


def check_reservoir(p: ReservoirParams) -> None:
    """Diluteness and weak-interaction bounds (errors) and confinement (warnings)."""
    gas = math.sqrt(p.a_B**3 * p.n0)
    if gas >= WEAK_INTERACTION_BOUND:
        raise ReservoirValidationError(
            f"weak-interaction bound violated: sqrt(a_B^3 n0) = {gas:.3g} >= {WEAK_INTERACTION_BOUND}"
        )
    ratio = p.a_B / units.A_RB
    bound = MAX_A_B_RATIO[p.dimension]
    if ratio > bound * (1 + 1e-9):
        raise ReservoirValidationError(
            f"diluteness bound violated in {p.dimension}D: a_B = {ratio:.4g} a_Rb exceeds the maximum "
            f"a_B = {bound:g} a_Rb"
        )
    if p.dimension == 2 and p.a_B >= p.a_z / 10:
        warnings.warn(f"quasi-2D needs a_B << a_z; a_B = {p.a_B:.3g} m, a_z = {p.a_z:.3g} m", stacklevel=3)
    if p.dimension == 1 and p.a_B >= p.a_perp / 10:
        warnings.warn(
            f"quasi-1D needs a_B << a_perp; a_B = {p.a_B:.3g} m, a_perp = {p.a_perp:.3g} m", stacklevel=3
        )


def default_reservoir(dimension: int = 3, **overrides) -> ReservoirParams:
    """87Rb background gas with 23Na impurities in a 600 nm lattice."""
    return ReservoirParams(dimension=dimension, **overrides)


# ---------------------------------------------------------------------------
# couplings and the Bogoliubov spectrum (SI)


def coupling_and_density(params: ReservoirParams) -> tuple[float, float]:
    """Boson-boson coupling and condensate density reduced to D dimensions.

    3D: 4 pi hbar^2 a_B/m_B and n0; 2D: sqrt(8 pi) hbar^2 a_B/(m_B a_z) and
    sqrt(pi) n0 a_z; 1D: 2 hbar^2 a_B/(m_B a_perp^2) and pi n0 a_perp^2.
    """
    hb2 = units.HBAR**2
    p = params
    if p.dimension == 3:
        return 4 * math.pi * hb2 * p.a_B / p.m_B, p.n0
    if p.dimension == 2:
        return math.sqrt(8 * math.pi) * hb2 * p.a_B / (p.m_B * p.a_z), math.sqrt(math.pi) * p.n0 * p.a_z
    return 2 * hb2 * p.a_B / (p.m_B * p.a_perp**2), math.pi * p.n0 * p.a_perp**2


def impurity_coupling(params: ReservoirParams) -> float:
    """Impurity-boson coupling 4 pi hbar^2 a_AB / m_AB (m_AB reduced mass), reduced to D dims.

    The reduction divides by the Gaussian overlap of the confined
    direction(s): sqrt(2 pi) a_z in 2D and 2 pi a_perp^2 in 1D.
    """
    p = params
    m_ab = p.m_A * p.m_B / (p.m_A + p.m_B)
    g3 = 4 * math.pi * units.HBAR**2 * p.a_AB / m_ab
    if p.dimension == 3:
        return g3
    if p.dimension == 2:
        return g3 / (math.sqrt(2 * math.pi) * p.a_z)
    return g3 / (2 * math.pi * p.a_perp**2)


def chemical_potential(params: ReservoirParams) -> float:
    g, n = coupling_and_density(params)
    return g * n


@dataclass(frozen=True)
class BogoliubovMode:
    k: np.ndarray
    eps_k: np.ndarray
    E_k: np.ndarray
    uv_factor: np.ndarray


def bogoliubov_amplitudes(eps, mu):
    """|u_k| and |v_k| from u^2, v^2 = (eps + mu)/(2E) +- 1/2.

    ``v^2 = (eps + mu)/(2E) - 1/2`` cancels badly once eps >> mu, so ``v``
    is taken from the product ``u v = mu / (2E)`` instead.
    """
    eps = np.asarray(eps, dtype=float)
    E = np.sqrt(eps * (eps + 2 * mu))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.sqrt((eps + mu + E) / (2 * E))
        v = mu / (2 * E * u)
    return u, v


def bogoliubov(k, params: ReservoirParams) -> BogoliubovMode:
    """Free and Bogoliubov energies (J) and the factor (|u_k| - |v_k|)^2.

    Because u^2 - v^2 = 1, |u| - |v| = 1/(|u| + |v|); that form is used
    to avoid the cancellation at small k where |u| and |v| both diverge.
    """
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise DomainError("wavenumber must be nonnegative")
    mu = chemical_potential(params)
    eps = units.HBAR**2 * k**2 / (2 * params.m_B)
    E = np.sqrt(eps * (eps + 2 * mu))
    u, v = bogoliubov_amplitudes(eps, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.where(k > 0, 1.0 / (u + v) ** 2, 0.0 if mu > 0 else 1.0)
    return BogoliubovMode(k, eps, E, uv)


def sound_velocity(params: ReservoirParams) -> float:
    return math.sqrt(chemical_potential(params) / params.m_B)


# ---------------------------------------------------------------------------
# reference units


@dataclass(frozen=True)
class Reduced:
    """Dimensionless form of a reservoir used by the integrals."""

    dimension: int
    mu: float
    sigma: float
    L: float
    T: float
    pref_dw: float
    pref_aqd: float
    E_ref: float
    t_ref: float
    l_ref: float


def reference_energy(params: ReservoirParams) -> float:
    return params.n0 * 4 * math.pi * units.HBAR**2 * units.A_RB / params.m_B


def reduce(params: ReservoirParams) -> Reduced:
    E_ref = reference_energy(params)
    l_ref = units.HBAR / math.sqrt(params.m_B * E_ref)
    g_d, n_d = coupling_and_density(params)
    g_ab = impurity_coupling(params)
    D = params.dimension
    base = g_ab**2 * n_d / (E_ref**2 * l_ref**D)
    return Reduced(
        dimension=D,
        mu=g_d * n_d / E_ref,
        sigma=params.sigma / l_ref,
        L=params.L / l_ref,
        T=units.K_B * params.T / E_ref,
        pref_dw=8.0 * base,
        pref_aqd=base,
        E_ref=E_ref,
        t_ref=units.HBAR / E_ref,
        l_ref=l_ref,
    )


_SURFACE = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}


def angular_factor(k, L, dimension, mode="average"):
    """Directional average of sin^2(k.L).

    ``average`` averages over directions in D dimensions, ``aligned`` keeps
    k parallel to L and ``unity`` replaces the factor by 1.
    """
    x = np.asarray(k, dtype=float) * L
    if mode == "unity":
        return np.ones_like(x)
    if mode == "aligned" or dimension == 1:
        return np.sin(x) ** 2
    if mode != "average":
        raise DomainError(f"unknown angular mode {mode!r}")
    if dimension == 2:
        return 0.5 * (1.0 - special.j0(2 * x))
    return 0.5 * (1.0 - np.sinc(2 * x / np.pi))


def _prefactor(red: Reduced, model: str) -> float:
    if model == "double-well":
        return red.pref_dw
    if model == "aqd":
        return red.pref_aqd
    raise DomainError(f"unknown model {model!r}; choose from {MODELS}")


def _k_weight(k, red: Reduced, model: str, angular: str):
    """Integrand of Gamma in k without the sin^2(E t/2) and thermal factors."""
    D = red.dimension
    k = np.asarray(k, dtype=float)
    eps = 0.5 * k * k
    E = np.sqrt(eps * (eps + 2 * red.mu))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = k ** (D - 1) * (eps / E) * np.exp(-0.5 * (k * red.sigma) ** 2) / E**2
    if model == "double-well":
        w = w * angular_factor(k, red.L, D, angular)
    return _prefactor(red, model) * _SURFACE[D] / (2 * math.pi) ** D * w, E


def k_max(red: Reduced) -> float:
    return K_SIGMA_MAX / red.sigma


def omega_max(red: Reduced) -> float:
    k = k_max(red)
    eps = 0.5 * k * k
    return math.sqrt(eps * (eps + 2 * red.mu))


# ---------------------------------------------------------------------------
# decoherence factors, direct k-space route


def _gamma_k(t, params, model, angular, tol):
    if t < 0:
        raise DomainError("time must be nonnegative")
    if t == 0:
        return 0.0
    red = reduce(params)
    if red.pref_dw == 0:
        return 0.0
    t_red = t
    km = k_max(red)

    def f(k):
        w, E = _k_weight(k, red, model, angular)
        if not E > 0:
            return 0.0
        th = thermal_factor(E, red.T) if red.T > 0 else 1.0
        return float(w * th) * math.sin(0.5 * E * t_red) ** 2

    # half periods of sin^2(E t/2) in E, mapped back to k
    E_max = omega_max(red)
    n = int(E_max * t_red / math.pi)
    E_edges = math.pi / t_red * np.arange(1, n + 1)
    k_edges = inverse_dispersion(E_edges, red.mu)
    if tol is None:
        tol = 1e-12 * _prefactor(red, model)
    return integrate(f, 0.0, km, tol, breakpoints=k_edges)


def gamma_dw(t: float, params: ReservoirParams, angular: str = "average", tol: float | None = None) -> float:
    """Double-well decoherence factor at time ``t`` (in hbar/E_ref) by k-space quadrature."""
    return _gamma_k(float(t), params, "double-well", angular, tol)


def gamma_aqd(t: float, params: ReservoirParams, tol: float | None = None) -> float:
    """Atomic-quantum-dot decoherence factor at time ``t`` (in hbar/E_ref).

    At T > 0 the integrand carries the same coth(E/2T) factor as the
    double-well model.
    """
    return _gamma_k(float(t), params, "aqd", "average", tol)


def inverse_dispersion(omega, mu):
    """k with E(k) = omega: eps = omega^2/(sqrt(mu^2 + omega^2) + mu), k = sqrt(2 eps)."""
    omega = np.asarray(omega, dtype=float)
    eps = omega**2 / (np.sqrt(mu * mu + omega**2) + mu)
    return np.sqrt(2 * eps)


# ---------------------------------------------------------------------------
# effective spectral density, frequency route


@dataclass(frozen=True)
class BogoliubovSpectrum:
    """Effective J(w) of a condensate reservoir in reference units.

    Defined so that ``Gamma(t) = int J(w) coth(w/2T) (1 - cos wt)/w^2 dw``
    reproduces :func:`gamma_dw` or :func:`gamma_aqd`.
    """

    red: Reduced
    model: str = "double-well"
    angular: str = "average"
    omega_top: float | None = None

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        mu = self.red.mu
        k = inverse_dispersion(w, mu)
        eps = 0.5 * k * k
        with np.errstate(divide="ignore", invalid="ignore"):
            dk_dw = np.where(k > 0, w / (k * (eps + mu)), 0.0)
            weight, _ = _k_weight(k, self.red, self.model, self.angular)
            out = 0.5 * w * w * weight * dk_dw
        out = np.where((w > 0) & (k <= k_max(self.red)), out, 0.0)
        return np.nan_to_num(out, nan=0.0, posinf=0.0)

    @property
    def omega_max(self) -> float:
        return self.omega_top if self.omega_top is not None else omega_max(self.red)

    @property
    def frequency_scale(self) -> float:
        return max(self.red.mu, 1.0)

    def quadrature_edges(self) -> np.ndarray:
        top = self.omega_max
        return geometric_edges(1e-9, top, ratio=1.12, max_width=top / 400.0)


def bogoliubov_spectrum(params: ReservoirParams, model="double-well", angular="average", omega_top=None):
    return BogoliubovSpectrum(reduce(params), model, angular, omega_top)


def effective_spectrum(params: ReservoirParams, omega, model: str = "double-well", angular: str = "average"):
    """Tabulated effective spectral density on a frequency grid (reference units)."""
    spec = bogoliubov_spectrum(params, model, angular)
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0) or np.any(omega > spec.omega_max):
        raise DomainError(
            f"frequencies must lie in (0, {spec.omega_max:.6g}], the range of the dispersion up to the cutoff"
        )
    return TabulatedSpectrum(omega, spec(omega))


def decoherence_trajectory(params: ReservoirParams, grid, model: str = "double-well", angular="average", spec=None):
    """Gamma(t) on a grid through the frequency route with the effective J."""
    if spec is None:
        spec = bogoliubov_spectrum(params, model, angular)
    return decoherence_factor(spec, spec.red.T, grid)


def gamma_infinity(spec: BogoliubovSpectrum) -> float:
    """Long-time average of Gamma, int J coth / w^2; infinite when it diverges at w -> 0."""
    T = spec.red.T
    w_lo = np.array([1e-8, 1e-7])
    j = spec(w_lo)
    if np.all(j > 0):
        slope = math.log(j[1] / j[0]) / math.log(10.0)
        critical = 2.0 if T > 0 else 1.0
        if slope <= critical + 1e-3:
            return math.inf
    elif spec.red.pref_dw == 0:
        return 0.0
    q = quadrature_for(spec)
    w = q.nodes
    g = spec(w) * thermal_factor(w, T) / w**2
    return float(q.plain_weights() @ g)


# ---------------------------------------------------------------------------
# crossover scans


@dataclass(frozen=True)
class ScanPoint:
    a_B_over_aRb: float
    measure: float
    Gamma_inf: float


@dataclass(frozen=True)
class CrossoverResult:
    dimension: int
    a_crit_over_aRb: float
    points: list[ScanPoint]
    t_max: float
    T: float
    model: str

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a_B_over_aRb", "measure", "Gamma_inf"])
            for p in self.points:
                w.writerow([f"{p.a_B_over_aRb:.12g}", f"{p.measure:.12g}", f"{p.Gamma_inf:.12g}"])

    def summary(self) -> dict:
        return {
            "dimension": self.dimension,
            "a_B_crit_over_aRb": float(f"{self.a_crit_over_aRb:.12g}"),
            "t_max": self.t_max,
            "T_K": self.T,
            "model": self.model,
        }


class _ScanContext:
    """Shared quadrature and time grid for all reservoirs of one scan."""

    def __init__(self, base: ReservoirParams, ratios, t_max, n_t, model, angular):
        self.base = base
        self.model = model
        self.angular = angular
        self.grid = np.linspace(0.0, t_max, n_t)
        top = max(omega_max(reduce(base.with_a_B_ratio(r))) for r in ratios)
        self.omega_top = top

    def spectrum(self, ratio) -> BogoliubovSpectrum:
        p = self.base.with_a_B_ratio(ratio)
        return BogoliubovSpectrum(reduce(p), self.model, self.angular, self.omega_top)

    def Gamma(self, ratio) -> Trajectory:
        spec = self.spectrum(ratio)
        return decoherence_factor(spec, spec.red.T, self.grid)

    def measure(self, ratio) -> float:
        return modified_measure(self.Gamma(ratio)).value


def crossover_scan(
    dimension: int,
    a_B_grid: Sequence[float],
    T: float = 0.0,
    t_max: float | None = None,
    params: ReservoirParams | None = None,
    model: str = "double-well",
    angular: str = "average",
    n_t: int = 2001,
    threshold: float = MEASURE_THRESHOLD,
    workers: int | None = None,
) -> CrossoverResult:
    """Locate the a_B where the bounded measure first exceeds ``threshold``.

    ``a_B_grid`` holds ratios a_B / a_Rb; T is in kelvin, t_max in hbar/E_ref.
    The boundary between the last zero and first positive grid points is
    refined with Brent's method on ``measure - threshold``.
    """
    ratios = np.asarray(sorted(float(r) for r in a_B_grid))
    if ratios.size < 8:
        raise DomainError("crossover scans need at least 8 grid points")
    if np.any(ratios <= 0):
        raise DomainError("a_B ratios must be positive")
    if t_max is None:
        t_max = DEFAULT_T_MAX
    base = replace(params, dimension=dimension, T=T) if params is not None else default_reservoir(dimension, T=T)
    for r in ratios:
        base.with_a_B_ratio(r)  # validates every grid point up front
    ctx = _ScanContext(base, ratios, t_max, n_t, model, angular)

    def cell(r):
        spec = ctx.spectrum(r)
        return ScanPoint(float(r), ctx.measure(r), gamma_infinity(spec))

    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            points = list(ex.map(cell, ratios))
    else:
        points = [cell(r) for r in ratios]

    m = np.array([p.measure for p in points])
    above = m > threshold
    if not above.any() or above[0]:
        raise NotBracketedError(
            f"measure does not cross {threshold:g} on the grid: "
            f"{m[0]:.3g} at a_B = {ratios[0]:.4g} a_Rb, {m[-1]:.3g} at a_B = {ratios[-1]:.4g} a_Rb",
            low=float(m[0]),
            high=float(m[-1]),
        )
    i = int(np.argmax(above))
    lo, hi = ratios[i - 1], ratios[i]
    crit = optimize.brentq(lambda r: ctx.measure(r) - threshold, lo, hi, xtol=1e-7 * hi, rtol=1e-10)
    return CrossoverResult(dimension, float(crit), points, float(t_max), float(T), model)
