"""Trace-distance non-Markovianity measures.

All measures share one routine.  It takes samples of the squared
distinguishability ``D^2`` (``exp(-2 Gamma)`` for dephasing, ``L`` for
echoes, squared half Bloch distance for sampled pairs), finds the maximal
runs where it strictly increases and refines interior extrema with a
parabola through the neighbouring samples wherever the data are locally
quadratic.  The value is then the
telescoping sum ``sum_n D(b_n) - D(a_n)`` over the rising runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Trajectory, bloch_to_rho, rho_to_bloch, validate_density, validate_grid
from .errors import AmbiguousMeasureError, DomainError

METHODS = ("analytic-dephasing", "pair-sampled", "modified", "echo")
STRATEGIES = ("equator-antipodal", "haar-antipodal", "haar-general")


@dataclass
class MeasureReport:
    value: float
    intervals: list[tuple[float, float]]
    t_cut: float
    method: str
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if not self.value >= 0:
            raise DomainError(f"measure must be nonnegative, got {self.value}")

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "intervals": [[a, b] for a, b in self.intervals],
            "t_cut": self.t_cut,
            "method": self.method,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class Rise:
    """One rising run of the distinguishability with refined endpoints."""

    a: float
    b: float
    d_a: float
    d_b: float

    @property
    def gain(self) -> float:
        return self.d_b - self.d_a


# ---------------------------------------------------------------------------
# shared machinery


def _truncate(t, y, t_cut):
    """Samples on [t0, t_cut], with a linearly interpolated sample at t_cut."""
    if t_cut is None:
        return t, y, float(t[-1])
    t_cut = float(t_cut)
    if t_cut > t[-1] * (1 + 1e-12) or t_cut <= t[0]:
        raise DomainError(f"t_cut = {t_cut} outside the sampled range ({t[0]}, {t[-1]}]")
    keep = t <= t_cut
    tt, yy = t[keep], y[keep]
    if tt[-1] < t_cut and keep.sum() < t.size:
        yc = np.interp(t_cut, t, y)
        tt = np.append(tt, t_cut)
        yy = np.append(yy, yc)
    return tt, yy, t_cut


def _vertex(t, y, i, want_max):
    """Parabolic refinement of the extremum at interior sample ``i``.

    The vertex is accepted only where the data are locally quadratic: the
    parabola must predict the next samples out (i - 2, i + 2) to within
    the size of its own correction.  A corner between two straight pieces
    always fails this test (the prediction error is at least eight times
    the correction), so kinks keep their sampled extremum instead of an
    overshooting vertex.
    """
    t0, t1, t2 = t[i - 1], t[i], t[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    d01 = (y1 - y0) / (t1 - t0)
    d12 = (y2 - y1) / (t2 - t1)
    c2 = (d12 - d01) / (t2 - t0)
    if c2 == 0 or (want_max and c2 > 0) or (not want_max and c2 < 0):
        return t1, y1
    # p(x) = y1 + slope (x - t1) + c2 (x - t1)^2 with slope = dp/dx at t1
    slope = d01 + c2 * (t1 - t0)
    dx = -slope / (2 * c2)
    tv = t1 + dx
    if not (t0 <= tv <= t2):
        return t1, y1
    yv = y1 + slope * dx + c2 * dx * dx
    if (want_max and yv < y1) or (not want_max and yv > y1):
        return t1, y1
    correction = abs(yv - y1)
    for k in (i - 2, i + 2):
        if 0 <= k < t.size:
            x = t[k] - t1
            if abs(y1 + slope * x + c2 * x * x - y[k]) > correction:
                return t1, y1
    return tv, yv


def rising_runs(t, d2) -> list[Rise]:
    """Maximal strictly increasing runs of ``d2`` with refined endpoints.

    Returned endpoint values are distinguishabilities ``sqrt(d2)``.
    """
    n = t.size
    up = np.diff(d2) > 0
    runs = []
    i = 0
    while i < n - 1:
        if not up[i]:
            i += 1
            continue
        j = i
        while j < n - 1 and up[j]:
            j += 1
        # samples i..j increase
        if 0 < i:
            ta, ya = _vertex(t, d2, i, want_max=False)
        else:
            ta, ya = t[i], d2[i]
        if j < n - 1:
            tb, yb = _vertex(t, d2, j, want_max=True)
        else:
            tb, yb = t[j], d2[j]
        da = math.sqrt(min(max(ya, 0.0), 1.0))
        db = math.sqrt(min(max(yb, 0.0), 1.0))
        if db > da:
            runs.append(Rise(float(ta), float(tb), da, db))
        i = j
    return runs


def _report(runs, t_cut, method):
    value = math.fsum(r.gain for r in runs)
    return MeasureReport(max(value, 0.0), [(r.a, r.b) for r in runs], t_cut, method)


def _unpack(traj):
    if isinstance(traj, Trajectory):
        return traj.grid, np.asarray(traj.values, dtype=float)
    t, y = traj
    t = validate_grid(t, start_at_zero=False)
    y = np.asarray(y, dtype=float)
    if y.shape != t.shape:
        raise DomainError("values and grid differ in length")
    return t, y


# ---------------------------------------------------------------------------
# measures


def blp_dephasing(Gamma_traj, t_cut: float | None = None) -> MeasureReport:
    """BLP measure of a dephasing qubit, whose optimal distinguishability is exp(-Gamma)."""
    t, G = _unpack(Gamma_traj)
    if abs(G[0]) > 1e-12:
        raise DomainError(f"decoherence factor must vanish at the first time, got {G[0]}")
    t, G, t_cut = _truncate(t, G, t_cut)
    return _report(rising_runs(t, np.exp(-2.0 * G)), t_cut, "analytic-dephasing")


def modified_measure(Gamma_traj, t_cut: float | None = None) -> MeasureReport:
    """Fraction of previously lost distinguishability that returns.

    ``(D(b) - D(a)) / (D(0) - D(a))`` for the single rising window [a, b]
    of ``D = exp(-Gamma)``; zero when there is none.
    """
    t, G = _unpack(Gamma_traj)
    t, G, t_cut = _truncate(t, G, t_cut)
    runs = rising_runs(t, np.exp(-2.0 * G))
    if not runs:
        return MeasureReport(0.0, [], t_cut, "modified")
    if len(runs) > 1:
        raise AmbiguousMeasureError(
            f"decoherence factor decreases on {len(runs)} separate intervals; "
            "the bounded measure needs a single window, use blp_dephasing instead"
        )
    r = runs[0]
    d0 = math.exp(-G[0])
    denom = d0 - r.d_a
    if not denom > 0:
        raise DomainError("no distinguishability was lost before the rising window")
    value = min(1.0, r.gain / denom)
    return MeasureReport(value, [(r.a, r.b)], t_cut, "modified")


def echo_measure(L_traj, t_cut: float | None = None) -> MeasureReport:
    """``sum_n sqrt(L(b_n)) - sqrt(L(a_n))`` over intervals where L rises."""
    t, L = _unpack(L_traj)
    if np.any(L < -1e-9) or np.any(L > 1 + 1e-9):
        raise DomainError("echo values must lie in [0, 1]")
    L = np.clip(L, 0.0, 1.0)
    t, L, t_cut = _truncate(t, L, t_cut)
    return _report(rising_runs(t, L), t_cut, "echo")


def divisibility_witness(gamma_traj) -> list[tuple[float, float]]:
    """Intervals where the rate is negative, with linearly interpolated crossings."""
    t, g = _unpack(gamma_traj)
    neg = g < 0
    out = []
    n = t.size
    i = 0
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        a = t[0] if i == 0 else _crossing(t[i - 1], t[i], g[i - 1], g[i])
        b = t[-1] if j == n - 1 else _crossing(t[j], t[j + 1], g[j], g[j + 1])
        out.append((float(a), float(b)))
        i = j + 1
    return out


def _crossing(t0, t1, g0, g1):
    if g0 == g1:
        return t0
    return t0 + (t1 - t0) * g0 / (g0 - g1)


# ---------------------------------------------------------------------------
# pair sampling


@dataclass(frozen=True)
class PairSampler:
    """Initial state pairs for the maximisation in the BLP measure.

    * ``equator-antipodal``: orthogonal pure states on the equator, random phase
    * ``haar-antipodal``: orthogonal pure states with a uniform random axis
    * ``haar-general``: two independent uniform pure states

    Pair ``i`` draws from its own stream seeded by ``(seed, i)``.  The two
    Haar strategies use the same draw: the antipodal axis is the direction
    of the difference of the two general states, so for any channel whose
    distinguishability depends only on the Bloch difference the antipodal
    pair is the rescaled general pair.
    """

    n_pairs: int = 16
    strategy: str = "equator-antipodal"
    seed: int = 0

    def __post_init__(self):
        if int(self.n_pairs) < 1:
            raise DomainError("need at least one pair")
        if self.strategy not in STRATEGIES:
            raise DomainError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")

    def pair(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Bloch vectors of pair ``i``."""
        rng = np.random.default_rng([int(self.seed), int(i)])
        if self.strategy == "equator-antipodal":
            phi = rng.uniform(0.0, 2 * np.pi)
            n = np.array([math.cos(phi), math.sin(phi), 0.0])
            return n, -n
        u1 = _unit(rng.standard_normal(3))
        u2 = _unit(rng.standard_normal(3))
        if self.strategy == "haar-general":
            return u1, u2
        d = u1 - u2
        nd = np.linalg.norm(d)
        n = d / nd if nd > 0 else u1
        return n, -n

    def pairs(self):
        for i in range(int(self.n_pairs)):
            yield self.pair(i)


def _unit(v):
    return v / np.linalg.norm(v)


def blp_sampled(
    channel: Callable[[np.ndarray], np.ndarray],
    grid,
    sampler: PairSampler,
    t_cut: float | None = None,
    workers: int | None = None,
) -> MeasureReport:
    """Maximum over sampled pairs of the total distinguishability gain.

    ``channel(rho0)`` must return the evolved states on ``grid`` as an
    array of shape (n_t, 2, 2).  The best pair is the one with the largest
    value; ties go to the lowest index so the result is deterministic.
    """
    t = validate_grid(grid, start_at_zero=False)

    def one(i):
        r1, r2 = sampler.pair(i)
        s1 = validate_density(channel(bloch_to_rho(r1)), atol=1e-9)
        s2 = validate_density(channel(bloch_to_rho(r2)), atol=1e-9)
        if s1.shape != (t.size, 2, 2) or s2.shape != s1.shape:
            raise DomainError("channel output does not match the grid")
        diff = rho_to_bloch(s1) - rho_to_bloch(s2)
        d2 = 0.25 * np.einsum("ij,ij->i", diff, diff)
        tt, dd, tc = _truncate(t, d2, t_cut)
        return _report(rising_runs(tt, dd), tc, "pair-sampled")

    idx = range(int(sampler.n_pairs))
    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            reports = list(ex.map(one, idx))
    else:
        reports = [one(i) for i in idx]
    best = reports[0]
    for r in reports[1:]:
        if r.value > best.value:
            best = r
    return best
