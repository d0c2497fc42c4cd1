"""Quantum-jump unraveling of qubit Lindblad dynamics and an RK4 reference.

Master equation (Lindblad form)::

    d rho/dt = -i[H, rho] + sum_k gamma_k (A_k rho A_k^+ - {A_k^+ A_k, rho}/2)

The jump unraveling evolves pure states with the non-Hermitian generator
``H_eff = H - (i/2) sum_k gamma_k A_k^+ A_k``; the factor 1/2 is what makes
the ensemble average obey the equation above.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.linalg import expm

from .core import check_hermitian, ket_to_rho, validate_density, validate_grid
from .errors import DomainError, InvalidOperatorError, StepSizeError

Rate = Union[float, Callable[[float], float]]
MAX_JUMP_PROBABILITY = 0.1


@dataclass(frozen=True)
class JumpChannel:
    """Jump operator ``A`` with a constant or time-dependent rate ``gamma >= 0``."""

    A: np.ndarray
    gamma: Rate

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        if A.shape != (2, 2) or not np.all(np.isfinite(A)):
            raise InvalidOperatorError("jump operator must be a finite 2x2 matrix")
        object.__setattr__(self, "A", A)
        if not callable(self.gamma):
            g = float(self.gamma)
            if not g >= 0:
                raise DomainError(f"jump rates must be nonnegative, got {g}")
            object.__setattr__(self, "gamma", g)

    def rate(self, t: float) -> float:
        g = float(self.gamma(t)) if callable(self.gamma) else self.gamma
        if not g >= 0:
            raise DomainError(f"negative rate {g} at t = {t}: only Markovian unravelings are supported")
        return g

    @property
    def AdA(self) -> np.ndarray:
        return self.A.conj().T @ self.A


@dataclass(frozen=True)
class EnsembleConfig:
    n_traj: int
    dt: float
    seed: int = 0

    def __post_init__(self):
        if int(self.n_traj) < 1:
            raise DomainError("need at least one trajectory")
        if not self.dt > 0:
            raise DomainError("time step must be positive")


def _channels(channels) -> list[JumpChannel]:
    if isinstance(channels, JumpChannel):
        return [channels]
    return list(channels)


def _check_step(channels, dt, t_end):
    """Reject steps with a worst-case jump probability above 0.1."""
    for ch in channels:
        norm = float(np.linalg.norm(ch.AdA, 2))
        if callable(ch.gamma):
            ts = np.linspace(0.0, t_end, 64)
            g = max(ch.rate(t) for t in ts)
        else:
            g = ch.gamma
        if dt * g * norm >= MAX_JUMP_PROBABILITY:
            raise StepSizeError(
                f"dt * gamma * |A^+A| = {dt * g * norm:.3g} >= {MAX_JUMP_PROBABILITY}; reduce dt"
            )


# ---------------------------------------------------------------------------
# deterministic reference


def lindblad_rhs(H, channels, rho, t: float = 0.0) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    out = -1j * (H @ rho - rho @ H)
    for ch in _channels(channels):
        g = ch.rate(t)
        if g == 0:
            continue
        A = ch.A
        AdA = ch.AdA
        out = out + g * (A @ rho @ A.conj().T - 0.5 * (AdA @ rho + rho @ AdA))
    return out


def lindblad_step(H, channels, rho, t: float, h: float) -> np.ndarray:
    """One classical RK4 step of the master equation."""
    k1 = lindblad_rhs(H, channels, rho, t)
    k2 = lindblad_rhs(H, channels, rho + 0.5 * h * k1, t + 0.5 * h)
    k3 = lindblad_rhs(H, channels, rho + 0.5 * h * k2, t + 0.5 * h)
    k4 = lindblad_rhs(H, channels, rho + h * k3, t + h)
    return rho + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _uniform_spacing(t):
    h = np.diff(t)
    if h.size == 0:
        return 0.0
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise DomainError("grid must be uniform")
    return float(h[0])


def lindblad_integrate(H, channels, rho0, grid, substeps: int | None = None, max_step: float = 0.01) -> np.ndarray:
    """Density matrices on a uniform grid, shape (n_t, 2, 2).

    Each grid interval is split into ``substeps`` RK4 steps (by default
    enough to keep steps below ``max_step``).  The generator is traceless,
    so an unstable step shows up as eigenvalues leaving [0, 1]; a departure
    above 1e-6 raises :class:`StepSizeError`.
    """
    H = check_hermitian(H)
    chans = _channels(channels)
    rho = validate_density(rho0.rho if hasattr(rho0, "rho") else rho0).copy()
    t = validate_grid(grid)
    dt = _uniform_spacing(t)
    if substeps is None:
        substeps = max(1, int(math.ceil(dt / max_step))) if dt > 0 else 1
    h = dt / substeps
    out = np.empty((t.size, 2, 2), dtype=complex)
    out[0] = rho
    for i in range(1, t.size):
        tt = t[i - 1]
        for j in range(substeps):
            rho = lindblad_step(H, chans, rho, tt + j * h, h)
        if not np.all(np.isfinite(rho)):
            raise StepSizeError(f"non-finite state at t = {t[i]:g}; reduce the step")
        ev = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        if ev[0] < -1e-6 or ev[-1] > 1 + 1e-6:
            raise StepSizeError(f"eigenvalues {ev[0]:.3g}, {ev[-1]:.3g} outside [0, 1] at t = {t[i]:g}; reduce the step")
        out[i] = rho
    return out


# ---------------------------------------------------------------------------
# quantum jumps


def trajectory_stream(seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible random stream of trajectory ``index``."""
    return np.random.default_rng([int(seed), int(index)])


def _step_plan(grid, dt):
    t = validate_grid(grid)
    if t.size < 2:
        raise DomainError("grid needs at least two points")
    spacing = _uniform_spacing(t)
    n_sub = int(round(spacing / dt))
    if n_sub < 1 or abs(n_sub * dt - spacing) > 1e-9 * spacing:
        raise DomainError(f"grid spacing {spacing:g} must be an integer multiple of dt = {dt:g}")
    return t, n_sub, spacing / n_sub


def _propagators(H, chans, dt, times):
    """exp(-i H_eff dt) at the given step midpoints (shared by all trajectories)."""
    const = all(not callable(c.gamma) for c in chans)
    if const:
        Heff = H - 0.5j * sum(c.rate(0.0) * c.AdA for c in chans)
        U = expm(-1j * Heff * dt)
        return lambda i: U
    cache = {}

    def get(i):
        U = cache.get(i)
        if U is None:
            tm = times[i]
            Heff = H - 0.5j * sum(c.rate(tm) * c.AdA for c in chans)
            U = cache[i] = expm(-1j * Heff * dt)
        return U

    return get


@dataclass
class JumpRecord:
    times: list[float]
    channels: list[int]


def _run(H, chans, psi0, t, n_sub, dt, uniforms):
    """Evolve a batch of trajectories.

    ``uniforms`` has shape (n_batch, n_steps, 2): the first number decides
    whether a jump happens in a step, the second picks the channel.
    Returns states on the grid (n_t, n_batch, 2) and per-trajectory jumps.
    """
    nb = uniforms.shape[0]
    n_steps = (t.size - 1) * n_sub
    psi = np.broadcast_to(psi0, (nb, 2)).astype(complex).copy()
    out = np.empty((t.size, nb, 2), dtype=complex)
    out[0] = psi
    mids = t[0] + (np.arange(n_steps) + 0.5) * dt
    prop = _propagators(H, chans, dt, mids)
    A = np.stack([c.A for c in chans])
    AdA = np.stack([c.AdA for c in chans])
    jumps = [JumpRecord([], []) for _ in range(nb)]
    for n in range(n_steps):
        tm = mids[n]
        rates = np.array([c.rate(tm) for c in chans])
        # dp_k = gamma_k dt <psi|A_k^+ A_k|psi>
        exp_vals = np.einsum("bi,kij,bj->bk", psi.conj(), AdA, psi).real
        dpk = rates[None, :] * dt * exp_vals
        dp = dpk.sum(axis=1)
        if np.any(dp > MAX_JUMP_PROBABILITY):
            raise StepSizeError(f"jump probability {dp.max():.3g} > {MAX_JUMP_PROBABILITY} at t = {tm:g}")
        r = uniforms[:, n, :]
        jump = r[:, 0] < dp
        if np.any(jump):
            idx = np.nonzero(jump)[0]
            cum = np.cumsum(dpk[idx], axis=1)
            k = (r[idx, 1:2] * dp[idx, None] >= cum).sum(axis=1)
            k = np.minimum(k, len(chans) - 1)
            new = np.einsum("bij,bj->bi", A[k], psi[idx])
            new /= np.linalg.norm(new, axis=1, keepdims=True)
            psi[idx] = new
            t_jump = t[0] + (n + 1) * dt
            for b, kk in zip(idx, k):
                jumps[b].times.append(float(t_jump))
                jumps[b].channels.append(int(kk))
        stay = ~jump
        if np.any(stay):
            U = prop(n)
            p = psi[stay] @ U.T
            p /= np.linalg.norm(p, axis=1, keepdims=True)
            psi[stay] = p
        if (n + 1) % n_sub == 0:
            out[(n + 1) // n_sub] = psi
    return out, jumps


def _prepare(H, channels, phi0, grid, dt):
    H = check_hermitian(H)
    chans = _channels(channels)
    if not chans:
        raise DomainError("need at least one jump channel")
    psi0 = np.asarray(phi0, dtype=complex)
    if psi0.shape != (2,) or abs(np.linalg.norm(psi0) - 1.0) > 1e-12:
        raise DomainError("initial state must be a normalised 2-vector")
    t, n_sub, dt = _step_plan(grid, dt)
    _check_step(chans, dt, t[-1])
    return H, chans, psi0, t, n_sub, dt


def mcwf_trajectory(H, channels, phi0, grid, rng: np.random.Generator, dt: float):
    """One quantum-jump trajectory.

    Returns the pure states on the grid (n_t, 2) and the jump record.
    Random numbers are drawn exactly as in :func:`ensemble_average`, so
    passing ``trajectory_stream(seed, i)`` reproduces trajectory ``i``.
    """
    H, chans, psi0, t, n_sub, dt = _prepare(H, channels, phi0, grid, dt)
    n_steps = (t.size - 1) * n_sub
    u = rng.random((1, n_steps, 2))
    states, jumps = _run(H, chans, psi0, t, n_sub, dt, u)
    return states[:, 0, :], jumps[0]


@dataclass
class EnsembleResult:
    grid: np.ndarray
    rho: np.ndarray  # (n_t, 2, 2)
    stderr: np.ndarray  # (n_t, 2, 2) standard errors of the real and imaginary parts, packed
    jumps: list[JumpRecord]

    @property
    def stderr00(self) -> np.ndarray:
        return self.stderr[:, 0, 0].real

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "rho00", "Re_rho01", "Im_rho01", "rho11", "stderr00"])
            for i, t in enumerate(self.grid):
                r = self.rho[i]
                row = [t, r[0, 0].real, r[0, 1].real, r[0, 1].imag, r[1, 1].real, self.stderr00[i]]
                w.writerow([f"{x:.12g}" for x in row])

    def jumps_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["traj", "jump_time"])
            for i, rec in enumerate(self.jumps):
                for tj in rec.times:
                    w.writerow([i, f"{tj:.12g}"])


def ensemble_average(
    config: EnsembleConfig, H, channels, phi0, grid, chunk: int = 2000
) -> EnsembleResult:
    """Mean projector over ``config.n_traj`` trajectories.

    Trajectory ``i`` uses the stream ``trajectory_stream(seed, i)``;
    batches are reduced in index order so results are reproducible bit
    for bit.  ``stderr[:, i, j]`` holds ``se(Re rho_ij) + 1j se(Im rho_ij)``.
    """
    H, chans, psi0, t, n_sub, dt = _prepare(H, channels, phi0, grid, config.dt)
    n_steps = (t.size - 1) * n_sub
    n = int(config.n_traj)
    s1 = np.zeros((t.size, 2, 2), dtype=complex)
    s2 = np.zeros((t.size, 2, 2), dtype=complex)
    jumps: list[JumpRecord] = []
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        u = np.stack([trajectory_stream(config.seed, i).random((n_steps, 2)) for i in range(start, stop)])
        states, jr = _run(H, chans, psi0, t, n_sub, dt, u)
        proj = ket_to_rho(states)  # (n_t, nb, 2, 2)
        s1 += proj.sum(axis=1)
        s2 += (proj.real**2).sum(axis=1) + 1j * (proj.imag**2).sum(axis=1)
        jumps.extend(jr)
    mean = s1 / n
    if n > 1:
        var_re = np.maximum(s2.real / n - mean.real**2, 0.0) * n / (n - 1)
        var_im = np.maximum(s2.imag / n - mean.imag**2, 0.0) * n / (n - 1)
        stderr = np.sqrt(var_re / n) + 1j * np.sqrt(var_im / n)
    else:
        stderr = np.zeros_like(mean)
    return EnsembleResult(t, mean, stderr, jumps)


def waiting_times(jumps: Sequence[JumpRecord]) -> np.ndarray:
    """First jump time of every trajectory that jumped."""
    return np.array([r.times[0] for r in jumps if r.times])
