"""Spectral densities, the xi(w, T) convexity test and effective Ohmicity fits."""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .core import OscillatoryQuadrature, geometric_edges
from .errors import DomainError

# ---------------------------------------------------------------------------
# Euler gamma function (Lanczos, g = 7, n = 9)

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def euler_gamma(x: float) -> float:
    """Euler gamma function via the Lanczos approximation.

    Relative error is below 1e-13 on (0, 10]; arguments below 1/2 go
    through the reflection formula.  Poles (0, -1, -2, ...) raise.
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise DomainError(f"gamma function has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * euler_gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (x + i)
    tt = x + _LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * tt ** (x + 0.5) * math.exp(-tt) * acc


# ---------------------------------------------------------------------------
# temperature


@dataclass(frozen=True)
class Temperature:
    """Bath temperature in the energy units of the spectrum (k_B = 1).

    ``regime`` is ``"zero"`` for T = 0, ``"high"`` when flagged as the
    high-temperature limit and ``"finite"`` otherwise.
    """

    T: float = 0.0
    high: bool = False

    def __post_init__(self):
        if not (self.T >= 0) or math.isinf(self.T):
            raise DomainError(f"temperature must be finite and nonnegative, got {self.T}")
        if self.high and self.T == 0:
            raise DomainError("high-temperature regime requires T > 0")

    @property
    def regime(self) -> str:
        if self.T == 0:
            return "zero"
        return "high" if self.high else "finite"


def as_temperature(T) -> Temperature:
    if isinstance(T, Temperature):
        return T
    return Temperature(float(T))


def thermal_factor(omega, T) -> np.ndarray:
    """``coth(w / 2T)``, identically 1 at T = 0."""
    T = as_temperature(T).T
    omega = np.asarray(omega, dtype=float)
    if T == 0:
        return np.ones_like(omega)
    x = omega / (2.0 * T)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 20.0, 1.0, 1.0 / np.tanh(x))


# ---------------------------------------------------------------------------
# spectral densities


@dataclass(frozen=True)
class OhmicSpectrum:
    """``J(w) = w^s wc^(1-s) exp(-w/wc)``."""

    s: float
    omega_c: float = 1.0

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise DomainError(f"Ohmicity must be positive, got {self.s}")
        if not (self.omega_c > 0 and math.isfinite(self.omega_c)):
            raise DomainError(f"cutoff must be positive, got {self.omega_c}")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        x = omega / self.omega_c
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.omega_c * x**self.s * np.exp(-x)
        return out

    @property
    def frequency_scale(self) -> float:
        return self.omega_c

    @property
    def omega_max(self) -> float:
        # x^s exp(-x) is below 1e-20 of its peak here; the bound is kept
        # independent of s (for s <= 10) so scans over s share one rule.
        return self.omega_c * max(80.0, 30.0 + 5.0 * self.s)

    def quadrature_edges(self) -> np.ndarray:
        return geometric_edges(
            1e-10 * self.omega_c, self.omega_max, ratio=1.15, max_width=0.5 * self.omega_c
        )


@dataclass(frozen=True)
class TabulatedSpectrum:
    """Sampled ``J(w)``, linearly interpolated and zero outside the table.

    Below the first sample J is interpolated linearly towards J(0) = 0.
    """

    omega: np.ndarray
    j: np.ndarray
    low_freq_window: tuple[float, float] | None = None

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        j = np.asarray(self.j, dtype=float)
        if omega.ndim != 1 or omega.shape != j.shape or omega.size < 2:
            raise DomainError("omega and j must be 1-d arrays of equal length >= 2")
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(j))):
            raise DomainError("table contains non-finite values")
        if omega[0] < 0 or np.any(np.diff(omega) <= 0):
            raise DomainError("omega must be nonnegative and strictly increasing")
        if np.any(j < 0):
            raise DomainError("J must be nonnegative")
        window = self.low_freq_window
        if window is None:
            window = (omega[-1] / 1000.0, omega[-1] / 50.0)
        window = (float(window[0]), float(window[1]))
        if not (0 < window[0] < window[1]):
            raise DomainError(f"invalid low-frequency window {window}")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "low_freq_window", window)

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        xs, ys = self.omega, self.j
        if xs[0] > 0:
            xs = np.concatenate([[0.0], xs])
            ys = np.concatenate([[0.0], ys])
        return np.interp(w, xs, ys, left=0.0, right=0.0)

    @property
    def frequency_scale(self) -> float:
        return float(self.omega[np.argmax(self.j)]) or float(self.omega[-1])

    @property
    def omega_max(self) -> float:
        return float(self.omega[-1])

    def quadrature_edges(self) -> np.ndarray:
        # Panels that never straddle a table knot, so each panel integrates a
        # linear function times the kernel.
        knots = self.omega[self.omega > 0]
        lo = min(knots[0], 1e-10 * self.omega_max)
        edges = np.unique(np.concatenate([geometric_edges(lo, knots[0], 1.15), knots]))
        return edges

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega", "j"])
            for o, v in zip(self.omega, self.j):
                w.writerow([f"{o:.12g}", f"{v:.12g}"])

    @classmethod
    def from_csv(cls, path, low_freq_window=None) -> "TabulatedSpectrum":
        rows = list(csv.reader(Path(path).read_text().splitlines()))
        if not rows or [c.strip() for c in rows[0]] != ["omega", "j"]:
            raise DomainError(f"{path}: expected header 'omega,j'")
        data = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                data.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError) as exc:
                raise DomainError(f"{path}:{lineno}: cannot parse row {row!r}") from exc
        arr = np.asarray(data, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], low_freq_window)


def ohmic_j(spec: OhmicSpectrum, omega):
    """Ohmic-family spectral density; negative frequencies are rejected."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise DomainError("frequency must be nonnegative")
    out = spec(omega)
    return float(out) if out.ndim == 0 else out


def xi(spec, T, omega):
    """``xi(w, T) = J(w) coth(w/2T) / w^2``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DomainError("xi is defined for positive frequencies only")
    out = spec(omega) * thermal_factor(omega, T) / omega**2
    return float(out) if out.ndim == 0 else out


def quadrature_for(spec) -> OscillatoryQuadrature:
    """Oscillatory quadrature rule for a spectral density, shared between
    spectra with identical panel edges so cached time weights are reused."""
    edges = np.asarray(spec.quadrature_edges(), dtype=float)
    key = edges.tobytes()
    with _QUAD_LOCK:
        rule = _QUAD_CACHE.get(key)
        if rule is None:
            if len(_QUAD_CACHE) > 32:
                _QUAD_CACHE.clear()
            rule = _QUAD_CACHE[key] = OscillatoryQuadrature(edges)
    return rule


_QUAD_CACHE: dict = {}
_QUAD_LOCK = threading.Lock()


# ---------------------------------------------------------------------------
# convexity


@dataclass(frozen=True)
class ConvexityVerdict:
    convex: bool
    first_violation: float | None = None

    def __bool__(self):
        return self.convex


CONVEXITY_TOL = 1e-8


def is_convex(spec, T=0.0, window: tuple[float, float] | None = None, n: int = 512) -> ConvexityVerdict:
    """Numerical convexity test of ``xi(w, T)`` on a log-spaced grid.

    Uses three-point second differences adapted to the nonuniform grid;
    the verdict is convex when all of them are >= -1e-8 * max|xi''|.
    The default window is ``(1e-4, 10) * frequency_scale``.  This is a
    numerical verdict, not a proof.
    """
    if window is None:
        window = (1e-4 * spec.frequency_scale, 10.0 * spec.frequency_scale)
    lo, hi = float(window[0]), float(window[1])
    if not (0 < lo < hi):
        raise DomainError(f"window must satisfy 0 < lo < hi, got {window}")
    if n < 16:
        raise DomainError("convexity grid needs at least 16 points")
    w = np.geomspace(lo, hi, n)
    f = xi(spec, T, w)
    if not np.all(np.isfinite(f)):
        raise DomainError("xi is not finite inside the window")
    hm = w[1:-1] - w[:-2]
    hp = w[2:] - w[1:-1]
    d2 = 2.0 * ((f[2:] - f[1:-1]) / hp - (f[1:-1] - f[:-2]) / hm) / (hp + hm)
    scale = np.abs(d2).max()
    bad = np.nonzero(d2 < -CONVEXITY_TOL * scale)[0]
    if bad.size == 0:
        return ConvexityVerdict(True, None)
    return ConvexityVerdict(False, float(w[bad[0] + 1]))


# ---------------------------------------------------------------------------
# effective Ohmicity


@dataclass(frozen=True)
class OhmicityFit:
    s_eff: float
    stderr: float
    window: tuple[float, float]
    n_points: int


def fit_effective_ohmicity(spec: TabulatedSpectrum, window=None) -> OhmicityFit:
    """Least-squares slope of log J against log w inside the low-frequency window."""
    if window is None:
        window = spec.low_freq_window
    lo, hi = window
    sel = (spec.omega >= lo) & (spec.omega <= hi)
    w = spec.omega[sel]
    j = spec.j[sel]
    if w.size < 8:
        raise DomainError(f"fit window {window} contains {w.size} samples; at least 8 are required")
    if np.any(j <= 0):
        raise DomainError("fit window contains zero or negative J samples")
    res = stats.linregress(np.log(w), np.log(j))
    return OhmicityFit(float(res.slope), float(res.stderr), (float(lo), float(hi)), int(w.size))
