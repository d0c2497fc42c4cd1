"""Transverse-field Ising chain probed by a centrally coupled qubit.

The chain ``H(lam) = -J sum_j sz_j sz_{j+1} + lam sum_j sx_j`` (periodic)
is free-fermionic.  In the even-parity sector with momenta
``k = (2m+1) pi / N`` every pair (k, -k) evolves in a two-level space
with ``h_k(lam) = 2[(lam - J cos k) sz + J sin k sx]``.  The probe qubit
shifts the field to ``lam + delta`` in its excited branch, and the echo is
the product of per-mode return probabilities.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .blp import MeasureReport, echo_measure
from .core import SIGMA_X, SIGMA_Z, Trajectory, expm_2x2, validate_grid
from .errors import DomainError

ED_MAX_SITES = 10


@dataclass(frozen=True)
class IsingParams:
    N: int
    lam: float
    delta: float
    J: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise DomainError(f"N must be an even integer >= 4, got {self.N}")
        if not self.J > 0:
            raise DomainError("coupling J must be positive")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError("transverse field must be finite and nonnegative")
        if not math.isfinite(self.delta):
            raise DomainError("probe coupling must be finite")
        object.__setattr__(self, "N", int(self.N))

    @property
    def lam_star(self) -> float:
        return self.lam + self.delta

    @classmethod
    def from_lambda_star(cls, N: int, lam_star: float, delta: float, J: float = 1.0) -> "IsingParams":
        return cls(N, lam_star - delta, delta, J)


@dataclass(frozen=True)
class ModeSet:
    k: np.ndarray
    h_ground: np.ndarray  # (N/2, 2, 2) at lam
    h_excited: np.ndarray  # (N/2, 2, 2) at lam + delta
    ground: np.ndarray  # (N/2, 2) ground states of h_ground


def momenta(N: int) -> np.ndarray:
    return (2 * np.arange(N // 2) + 1) * np.pi / N


def mode_hamiltonian(k, lam: float, J: float = 1.0) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    a_z = 2.0 * (lam - J * np.cos(k))
    a_x = 2.0 * J * np.sin(k)
    return a_z[..., None, None] * SIGMA_Z + a_x[..., None, None] * SIGMA_X


def mode_energy(k, lam: float, J: float = 1.0) -> np.ndarray:
    """Positive eigenvalue of h_k: 2 sqrt(J^2 + lam^2 - 2 J lam cos k)."""
    return 2.0 * np.sqrt(J * J + lam * lam - 2.0 * J * lam * np.cos(k))


def mode_ground_state(k, lam: float, J: float = 1.0) -> np.ndarray:
    """Closed-form ground state of h_k (Bloch vector opposite to the field)."""
    k = np.asarray(k, dtype=float)
    a_z = lam - J * np.cos(k)
    a_x = J * np.sin(k)
    # ground state points along -(a_x, 0, a_z): polar angle theta of that axis
    theta = np.arctan2(np.hypot(a_x, 0.0), -a_z)
    phi = np.where(a_x > 0, np.pi, 0.0)
    psi = np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=-1)
    return psi


def build_modes(params: IsingParams) -> ModeSet:
    k = momenta(params.N)
    return ModeSet(
        k,
        mode_hamiltonian(k, params.lam, params.J),
        mode_hamiltonian(k, params.lam_star, params.J),
        mode_ground_state(k, params.lam, params.J),
    )


def loschmidt_echo(params: IsingParams, grid) -> Trajectory:
    """Echo ``L(t) = prod_k |<g_k| exp(-i h_k(lam*) t) |g_k>|^2``.

    The product runs over modes in increasing k, so results are bitwise
    reproducible.
    """
    t = validate_grid(grid, start_at_zero=False)
    modes = build_modes(params)
    g = modes.ground
    out = np.empty(t.size)
    chunk = max(1, 200_000 // g.shape[0])
    for i in range(0, t.size, chunk):
        tc = t[i : i + chunk]
        U = expm_2x2(modes.h_excited[None], tc[:, None])  # (nt, nk, 2, 2)
        amp = np.einsum("ki,tkij,kj->tk", g.conj(), U, g)
        f = amp.real**2 + amp.imag**2
        out[i : i + chunk] = np.prod(f, axis=1)
    out = np.clip(out, 0.0, 1.0)
    out[t == 0] = 1.0  # exact, free of normalisation rounding in the product
    return Trajectory(t, out, "L")


# ---------------------------------------------------------------------------
# exact diagonalisation


def _site_op(op, j, N):
    mats = [np.eye(2)] * N
    mats[j] = op
    return reduce(np.kron, mats)


def chain_hamiltonian(N: int, lam: float, J: float = 1.0, periodic: bool = True) -> np.ndarray:
    """Dense ``-J sum sz sz + lam sum sx`` on 2^N states."""
    sz = SIGMA_Z.real
    sx = SIGMA_X.real
    dim = 2**N
    H = np.zeros((dim, dim))
    zs = [_site_op(sz, j, N) for j in range(N)]
    bonds = N if periodic else N - 1
    for j in range(bonds):
        H -= J * zs[j] @ zs[(j + 1) % N]
    for j in range(N):
        H += lam * _site_op(sx, j, N)
    return H


def ed_oracle(params: IsingParams, grid, periodic: bool = True) -> Trajectory:
    """Brute-force echo by dense diagonalisation of both branch Hamiltonians."""
    if params.N > ED_MAX_SITES:
        raise DomainError(f"exact diagonalisation limited to N <= {ED_MAX_SITES}, got {params.N}")
    t = validate_grid(grid, start_at_zero=False)
    Hg = chain_hamiltonian(params.N, params.lam, params.J, periodic)
    He = chain_hamiltonian(params.N, params.lam_star, params.J, periodic)
    Eg, Vg = np.linalg.eigh(Hg)
    phi = Vg[:, 0]
    Ee, Ve = np.linalg.eigh(He)
    c = Ve.T @ phi
    w = np.abs(c) ** 2
    # <phi| e^{iHg t} e^{-iHe t} |phi> = e^{i Eg0 t} sum_n |c_n|^2 e^{-i E_n t}
    amp = np.exp(-1j * np.outer(t, Ee)) @ w
    return Trajectory(t, np.abs(amp) ** 2, "L")


# ---------------------------------------------------------------------------
# probe measure and scans


def max_group_velocity(params: IsingParams) -> float:
    """Upper bound 2J of |d eps_k / dk| used for the recurrence estimate."""
    return 2.0 * params.J


def recurrence_time(params: IsingParams) -> float:
    return params.N / (2.0 * max_group_velocity(params))


def default_t_cut(params: IsingParams) -> float:
    return 0.8 * recurrence_time(params)


def probe_measure(params: IsingParams, t_cut: float | None = None, grid=None, dt: float = 0.01) -> MeasureReport:
    """Echo-based non-Markovianity truncated at ``t_cut``.

    Default ``t_cut`` is 0.8 of the quasiparticle recurrence time N/(2 v_max).
    A cut beyond the recurrence estimate attaches a warning to the report.
    """
    if t_cut is None:
        t_cut = default_t_cut(params)
    if not t_cut > 0:
        raise DomainError("t_cut must be positive")
    if grid is None:
        n = max(2, int(math.ceil(t_cut / dt)) + 1)
        grid = np.linspace(0.0, t_cut, n)
    rep = echo_measure(loschmidt_echo(params, grid), t_cut)
    t_rec = recurrence_time(params)
    if t_cut > t_rec:
        msg = f"t_cut = {t_cut:g} exceeds the recurrence estimate {t_rec:g}"
        rep.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return rep


@dataclass(frozen=True)
class ScanRow:
    N: int
    lambda_star: float
    delta: float
    t_cut: float
    measure: float


def criticality_scan(N_list, lambda_star_grid, delta: float, t_cut=None, dt: float = 0.01, workers: int | None = None):
    """Probe measure over (N, lam*) with lam = lam* - delta.

    ``t_cut`` may be a number or None (per-N default).  Rows come back in
    input order regardless of ``workers``.
    """
    N_list = [int(n) for n in N_list]
    grid = [float(x) for x in lambda_star_grid]
    if not N_list or not grid:
        raise DomainError("N list and lambda* grid must be nonempty")
    cells = [(N, ls) for N in N_list for ls in grid]

    def one(cell):
        N, ls = cell
        p = IsingParams.from_lambda_star(N, ls, delta)
        tc = default_t_cut(p) if t_cut is None else float(t_cut)
        return ScanRow(N, ls, float(delta), tc, probe_measure(p, tc, dt=dt).value)

    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, cells))
    return [one(c) for c in cells]


def locate_minimum(lambda_star, measure, atol: float = 1e-12) -> float:
    """Field at which the measure is smallest.

    Values within ``atol`` of the minimum count as tied; the answer is the
    centre of the longest contiguous tied run (the zero plateau around the
    critical point when the measure vanishes there exactly).
    """
    x = np.asarray(lambda_star, dtype=float)
    y = np.asarray(measure, dtype=float)
    if x.size == 0 or x.shape != y.shape:
        raise DomainError("need matching nonempty arrays")
    tied = y <= y.min() + atol
    best = (0, -1)
    i = 0
    while i < x.size:
        if tied[i]:
            j = i
            while j + 1 < x.size and tied[j + 1]:
                j += 1
            if j - i > best[1] - best[0]:
                best = (i, j)
            i = j + 1
        else:
            i += 1
    return 0.5 * (x[best[0]] + x[best[1]])


def write_scan_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "lambda_star", "delta", "t_cut", "measure"])
        for r in rows:
            w.writerow([r.N, f"{r.lambda_star:.12g}", f"{r.delta:.12g}", f"{r.t_cut:.12g}", f"{r.measure:.12g}"])


def write_echo_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "L"])
        for t, L in zip(traj.grid, traj.values):
            w.writerow([f"{t:.12g}", f"{L:.12g}"])
