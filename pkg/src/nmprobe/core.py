"""Qubit states, 2x2 propagators, time grids and quadrature utilities.

Basis convention: index 0 is the excited state |e> (sigma_z = +1) and
index 1 is the ground state |g>, so ``SIGMA_MINUS = |g><e|``.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _spi
from scipy import special as _sps

from .errors import DomainError, InvalidOperatorError, InvalidStateError, QuadratureError

STATE_ATOL = 1e-12

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T
PAULIS = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])


# ---------------------------------------------------------------------------
# states


def bloch_to_rho(r) -> np.ndarray:
    """Density matrices from Bloch vectors; works on arrays of shape (..., 3)."""
    r = np.asarray(r, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    rho = np.empty(r.shape[:-1] + (2, 2), dtype=complex)
    rho[..., 0, 0] = 0.5 * (1 + z)
    rho[..., 1, 1] = 0.5 * (1 - z)
    rho[..., 0, 1] = 0.5 * (x - 1j * y)
    rho[..., 1, 0] = 0.5 * (x + 1j * y)
    return rho


def rho_to_bloch(rho) -> np.ndarray:
    """Bloch vectors of (arrays of) 2x2 density matrices."""
    rho = np.asarray(rho)
    x = 2.0 * rho[..., 1, 0].real
    y = 2.0 * rho[..., 1, 0].imag
    z = (rho[..., 0, 0] - rho[..., 1, 1]).real
    return np.stack([x, y, z], axis=-1)


def ket_to_rho(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return psi[..., :, None] * psi[..., None, :].conj()


def validate_density(rho, atol: float = STATE_ATOL) -> np.ndarray:
    """Check the physicality of one or many 2x2 density matrices.

    Raises :class:`InvalidStateError` when a matrix is not Hermitian,
    not unit-trace or not positive within ``atol``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (2, 2):
        raise InvalidStateError(f"expected 2x2 matrices, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidStateError("state contains non-finite entries")
    herm = np.abs(rho - np.swapaxes(rho, -1, -2).conj()).max(initial=0.0)
    if herm > atol:
        raise InvalidStateError(f"state is not Hermitian (deviation {herm:.3g})")
    tr = np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0).max(initial=0.0)
    if tr > atol:
        raise InvalidStateError(f"state trace differs from 1 by {tr:.3g}")
    # For a unit-trace Hermitian 2x2 matrix positivity is |bloch| <= 1.
    norm = np.linalg.norm(rho_to_bloch(rho), axis=-1).max(initial=0.0)
    if norm > 1.0 + 2.0 * atol:
        raise InvalidStateError(f"state is not positive (|bloch| = {norm:.15g})")
    return rho


@dataclass(frozen=True)
class QubitState:
    """A validated qubit density matrix."""

    rho: np.ndarray

    def __post_init__(self):
        rho = validate_density(self.rho).copy()
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_bloch(cls, r) -> "QubitState":
        return cls(bloch_to_rho(r))

    @classmethod
    def from_ket(cls, psi) -> "QubitState":
        psi = np.asarray(psi, dtype=complex)
        n = np.linalg.norm(psi)
        if psi.shape != (2,) or not np.isfinite(n) or n == 0:
            raise InvalidStateError("ket must be a finite nonzero 2-vector")
        return cls(ket_to_rho(psi / n))

    @property
    def bloch(self) -> np.ndarray:
        return rho_to_bloch(self.rho)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))


def _as_rho(state) -> np.ndarray:
    if isinstance(state, QubitState):
        return state.rho
    return validate_density(state)


def trace_distance(rho1, rho2) -> float:
    """Trace distance between two qubit states.

    For a traceless Hermitian difference ``[[a, b], [b*, -a]]`` the
    eigenvalues are ``±sqrt(a^2 + |b|^2)``, so ``D = sqrt(a^2 + |b|^2)``.
    Accepts :class:`QubitState` instances or raw matrices (validated).
    """
    d = _as_rho(rho1) - _as_rho(rho2)
    a = 0.5 * (d[0, 0] - d[1, 1]).real
    b = d[0, 1]
    return float(min(1.0, math.hypot(a, abs(b))))


# ---------------------------------------------------------------------------
# operators


def check_hermitian(H, atol: float = STATE_ATOL) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.shape[-2:] != (2, 2):
        raise InvalidOperatorError(f"expected 2x2 operator, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise InvalidOperatorError("operator contains non-finite entries")
    dev = np.abs(H - np.swapaxes(H, -1, -2).conj()).max(initial=0.0)
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if dev > atol * scale:
        raise InvalidOperatorError(f"operator is not Hermitian (deviation {dev:.3g})")
    return H


def expm_2x2(H, t) -> np.ndarray:
    """Closed-form ``exp(-i H t)`` for Hermitian 2x2 ``H``.

    Writing ``H = b I + a.sigma`` gives
    ``exp(-iHt) = exp(-ibt) [cos(|a|t) I - i sin(|a|t) a.sigma/|a|]``.
    ``H`` may carry leading batch axes and ``t`` broadcasts against them.
    """
    H = check_hermitian(H)
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise InvalidOperatorError("time contains non-finite entries")
    b = 0.5 * (H[..., 0, 0] + H[..., 1, 1]).real
    ax = H[..., 1, 0].real
    ay = H[..., 1, 0].imag
    az = 0.5 * (H[..., 0, 0] - H[..., 1, 1]).real
    norm = np.sqrt(ax * ax + ay * ay + az * az)
    phase = norm * t
    c = np.cos(phase)
    # sin(|a| t)/|a| written through sinc so that |a| -> 0 is exact.
    s = t * np.sinc(phase / np.pi)
    g = np.exp(-1j * b * t)
    shape = np.broadcast(c, ax).shape
    U = np.empty(shape + (2, 2), dtype=complex)
    U[..., 0, 0] = g * (c - 1j * s * az)
    U[..., 1, 1] = g * (c + 1j * s * az)
    U[..., 0, 1] = g * (-1j * s * (ax - 1j * ay))
    U[..., 1, 0] = g * (-1j * s * (ax + 1j * ay))
    return U


# ---------------------------------------------------------------------------
# grids and trajectories


def validate_grid(points, *, start_at_zero: bool = True) -> np.ndarray:
    t = np.asarray(points, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise DomainError("time grid must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(t)):
        raise DomainError("time grid contains non-finite points")
    if start_at_zero and t[0] != 0.0:
        raise DomainError(f"time grid must start at 0, got {t[0]!r}")
    if np.any(np.diff(t) <= 0):
        raise DomainError("time grid must be strictly increasing")
    return t


def uniform_grid(t_max: float, n: int) -> np.ndarray:
    if not t_max > 0 or n < 2:
        raise DomainError("uniform grid needs t_max > 0 and n >= 2")
    return np.linspace(0.0, t_max, n)


@dataclass(frozen=True)
class Trajectory:
    """Samples of a scalar signal on a time grid."""

    grid: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        grid = validate_grid(self.grid, start_at_zero=False)
        values = np.asarray(self.values)
        if values.shape != grid.shape:
            raise DomainError(
                f"trajectory has {values.size} values for {grid.size} grid points"
            )
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.grid.size


# ---------------------------------------------------------------------------
# adaptive quadrature


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    *,
    period: float | None = None,
    breakpoints: Sequence[float] | None = None,
    scale: float = 1.0,
    max_panels: int = 200_000,
) -> float:
    """Adaptive quadrature of a scalar function with absolute error ``tol``.

    Each panel is handled by QUADPACK (Gauss-Kronrod with extrapolation,
    so integrable endpoint singularities are fine).

    ``period`` splits the range into panels of width ``period/2`` which is
    what oscillatory integrands such as ``1 - cos(w t)`` need (use
    ``period = 2*pi/t``).  ``breakpoints`` gives explicit panel edges
    instead.  An infinite upper limit without panels is mapped to [0, 1)
    with ``w = a + scale*u/(1-u)``; with panels, the walk stops once
    several consecutive panels contribute nothing and the remainder is
    added through the same mapping.
    """
    a = float(a)
    b = float(b)
    if not (a < b) or math.isnan(a) or math.isinf(a):
        raise DomainError(f"integration limits must satisfy a < b with finite a, got [{a}, {b}]")
    if tol <= 0:
        raise DomainError("tolerance must be positive")

    if period is not None:
        if not period > 0:
            raise DomainError("period must be positive")
        return _integrate_panels(f, a, b, tol, _periodic_edges(a, period / 2.0), scale, max_panels)
    if breakpoints is not None:
        edges = sorted(float(x) for x in breakpoints if a < x < b)
        return _integrate_panels(f, a, b, tol, iter(edges), scale, max_panels)
    return _integrate_single(f, a, b, tol, scale)


def _periodic_edges(a, width):
    k = 1
    while True:
        yield a + k * width
        k += 1


def _quad(f, a, b, epsabs, limit=200):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _spi.IntegrationWarning)
        val, err = _spi.quad(f, a, b, epsabs=epsabs, epsrel=0.0, limit=limit)
    return val, err


def _integrate_single(f, a, b, tol, scale):
    if math.isinf(b):

        def g(u):
            if u >= 1.0:
                return 0.0
            w = a + scale * u / (1.0 - u)
            return f(w) * scale / (1.0 - u) ** 2

        val, err = _quad(g, 0.0, 1.0, tol, limit=500)
    else:
        val, err = _quad(f, a, b, tol, limit=500)
    if not (math.isfinite(val) and err <= tol):
        raise QuadratureError(
            f"quadrature on [{a}, {b}] reached error {err:.3g} > tol {tol:.3g}", val, err
        )
    return val


def _integrate_panels(f, a, b, tol, edges, scale, max_panels):
    total = 0.0
    err_total = 0.0
    quiet = 0
    x0 = a
    n = 0
    panel_tol = tol * 1e-3
    for x1 in edges:
        if x1 >= b:
            break
        val, err = _quad(f, x0, x1, panel_tol)
        total += val
        err_total += err
        n += 1
        if n > max_panels:
            raise QuadratureError(f"more than {max_panels} panels needed", total, err_total)
        if math.isinf(b):
            quiet = quiet + 1 if abs(val) < panel_tol * 1e-2 else 0
            if quiet >= 5:
                tail = _integrate_single(f, x1, b, panel_tol, scale)
                total += tail
                x0 = b
                break
        x0 = x1
    if x0 < b:
        if math.isinf(b):
            total += _integrate_single(f, x0, b, panel_tol, scale)
        else:
            val, err = _quad(f, x0, b, panel_tol)
            total += val
            err_total += err
    if not math.isfinite(total) or err_total > tol:
        raise QuadratureError(
            f"panel quadrature error {err_total:.3g} exceeds tol {tol:.3g}", total, err_total
        )
    return total


# ---------------------------------------------------------------------------
# vectorised oscillatory quadrature over many times


_GL_ORDER = 16


@lru_cache(maxsize=None)
def _legendre_tables(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    # B[m, j] = (2m+1) w_j P_m(x_j)
    P = np.stack([_sps.eval_legendre(m, x) for m in range(order)])
    B = (2 * np.arange(order) + 1)[:, None] * w[None, :] * P
    return x, w, B


def geometric_edges(lo: float, hi: float, ratio: float = 1.15, max_width: float | None = None):
    """Panel edges growing geometrically from ``lo`` with widths capped at ``max_width``."""
    if not (0 < lo < hi):
        raise DomainError("need 0 < lo < hi")
    edges = [lo]
    while edges[-1] < hi:
        x = edges[-1]
        step = x * (ratio - 1.0)
        if max_width is not None:
            step = min(step, max_width)
        edges.append(min(x + step, hi))
    return np.asarray(edges)


@dataclass
class OscillatoryQuadrature:
    """Panel quadrature for ``int_0^{w_max} g(w) K(w t) dw`` at many times.

    ``K`` is one of ``cos``, ``sin`` or ``one_minus_cos``.  The range
    [0, edges[0]] is covered by Gauss nodes in ``u`` with ``w = edges[0]*u^2``
    (which smooths power-law behaviour at the origin); every other panel
    uses Gauss-Legendre nodes.  When a panel spans more than a couple of
    radians of phase the weights switch to Filon-Legendre form: ``g`` is
    expanded in Legendre polynomials on the panel and the oscillatory
    moments ``int P_m(x) e^{i k x} dx = 2 i^m j_m(k)`` are used exactly,
    so accuracy does not degrade at long times.

    Weight matrices are kept in a process-wide LRU cache bounded by
    ``WEIGHT_CACHE_BYTES``, so repeated integrals with different ``g`` on
    the same nodes and times cost one matrix-vector product.  Matrices
    larger than the budget are never stored; :meth:`integrate` then builds
    them in row blocks.
    """

    edges: np.ndarray
    order: int = _GL_ORDER
    direct_phase: float = 2.0
    nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or edges[0] <= 0 or np.any(np.diff(edges) <= 0):
            raise DomainError("edges must be positive and strictly increasing")
        self.edges = edges
        x, w, _ = _legendre_tables(self.order)
        u = 0.5 * (x + 1.0)
        self._head_nodes = edges[0] * u * u
        self._head_weights = 0.5 * w * edges[0] * 2.0 * u
        self._c = 0.5 * (edges[1:] + edges[:-1])
        self._h = 0.5 * (edges[1:] - edges[:-1])
        self._panel_nodes = self._c[:, None] + self._h[:, None] * x[None, :]
        self.nodes = np.concatenate([self._head_nodes, self._panel_nodes.ravel()])

    @property
    def omega_max(self) -> float:
        return float(self.edges[-1])

    def _key(self, times, kernel):
        return (self.edges.tobytes(), self.order, self.direct_phase, kernel, times.tobytes())

    def _blocks(self, times, kernel):
        chunk = max(1, 2_000_000 // max(1, self.nodes.size))
        for i in range(0, times.size, chunk):
            yield i, self._weights(times[i : i + chunk], kernel)

    def weights(self, times, kernel: str) -> np.ndarray:
        """Weight matrix ``W`` with ``sum_j W[i, j] g(nodes[j])`` = integral at ``times[i]``."""
        times = np.asarray(times, dtype=float)
        key = self._key(times, kernel)
        W = _weight_cache_get(key)
        if W is None:
            W = np.empty((times.size, self.nodes.size))
            for i, block in self._blocks(times, kernel):
                W[i : i + block.shape[0]] = block
            _weight_cache_put(key, W)
        return W

    def integrate(self, values, times, kernel: str) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.nodes.size:
            raise DomainError("values must be sampled at the quadrature nodes")
        times = np.asarray(times, dtype=float)
        if times.size * self.nodes.size * 8 <= WEIGHT_CACHE_BYTES:
            return self.weights(times, kernel) @ values.T
        out = np.empty((times.size,) + values.shape[:-1])
        for i, block in self._blocks(times, kernel):
            out[i : i + block.shape[0]] = block @ values.T
        return out

    def plain_weights(self) -> np.ndarray:
        """Weights of the non-oscillatory integral ``int g dw`` on the same nodes."""
        _, w, _ = _legendre_tables(self.order)
        return np.concatenate([self._head_weights, (self._h[:, None] * w[None, :]).ravel()])

    def _weights(self, t, kernel):
        x, w, B = _legendre_tables(self.order)
        t = t[:, None]
        head = self._head_weights[None, :] * _kernel(kernel, self._head_nodes[None, :] * t)

        h = self._h
        kappa = h[None, :] * t  # (nt, np)
        # direct Gauss weights for panels with little phase
        direct = (h[:, None] * w[None, :])[None] * _kernel(kernel, self._panel_nodes[None] * t[..., None])

        out = direct
        mask = kappa > self.direct_phase
        if np.any(mask):
            it, ip = np.nonzero(mask)
            kap = kappa[it, ip]
            m = np.arange(self.order)
            jm = _sps.spherical_jn(m[None, :], kap[:, None])  # (K, order)
            im = (1j) ** m
            # F[K, j] = sum_m i^m j_m(kap) B[m, j]
            F = (jm * im[None, :]) @ B
            phase = np.exp(1j * self._c[ip] * t[it, 0])
            Z = (h[ip] * phase)[:, None] * F
            if kernel == "cos":
                vals = Z.real
            elif kernel == "sin":
                vals = Z.imag
            else:  # one_minus_cos
                vals = h[ip][:, None] * w[None, :] - Z.real
            out = out.copy()
            out[it, ip, :] = vals
        return np.concatenate([head, out.reshape(t.shape[0], -1)], axis=1)


WEIGHT_CACHE_BYTES = 512 * 2**20
_WEIGHT_CACHE: OrderedDict = OrderedDict()
_WEIGHT_LOCK = threading.Lock()


def _weight_cache_get(key):
    with _WEIGHT_LOCK:
        W = _WEIGHT_CACHE.get(key)
        if W is not None:
            _WEIGHT_CACHE.move_to_end(key)
        return W


def _weight_cache_put(key, W):
    if W.nbytes > WEIGHT_CACHE_BYTES:
        return
    W.setflags(write=False)
    with _WEIGHT_LOCK:
        _WEIGHT_CACHE[key] = W
        total = sum(v.nbytes for v in _WEIGHT_CACHE.values())
        while total > WEIGHT_CACHE_BYTES:
            _, old = _WEIGHT_CACHE.popitem(last=False)
            total -= old.nbytes


def _kernel(kind, phase):
    if kind == "cos":
        return np.cos(phase)
    if kind == "sin":
        return np.sin(phase)
    if kind == "one_minus_cos":
        return 2.0 * np.sin(0.5 * phase) ** 2
    raise DomainError(f"unknown kernel {kind!r}")
