import math

import numpy as np
import pytest
from scipy import stats

from nmprobe.core import SIGMA_MINUS, SIGMA_X, SIGMA_Z, QubitState, ket_to_rho
from nmprobe.dephasing import apply_dephasing
from nmprobe.errors import DomainError, StepSizeError
from nmprobe.mcwf import (
    EnsembleConfig,
    JumpChannel,
    ensemble_average,
    lindblad_integrate,
    lindblad_step,
    mcwf_trajectory,
    trajectory_stream,
    waiting_times,
)

EXCITED = np.array([1, 0], dtype=complex)
GROUND = np.array([0, 1], dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)
ZERO_H = np.zeros((2, 2))


@pytest.fixture(scope="module")
def decay_ensemble():
    grid = np.linspace(0, 5, 51)
    res = ensemble_average(EnsembleConfig(10_000, 0.005, 0), ZERO_H, JumpChannel(SIGMA_MINUS, 1.0), EXCITED, grid)
    return grid, res


# --- channels and configuration ----------------------------------------------------------------


def test_channel_validation():
    with pytest.raises(DomainError):
        JumpChannel(SIGMA_MINUS, -0.5)
    with pytest.raises(DomainError):
        JumpChannel(SIGMA_MINUS, lambda t: -1.0).rate(0.3)
    assert JumpChannel(SIGMA_MINUS, lambda t: 2 * t).rate(0.25) == 0.5


def test_config_validation():
    with pytest.raises(DomainError):
        EnsembleConfig(0, 0.01)
    with pytest.raises(DomainError):
        EnsembleConfig(10, 0.0)


def test_large_step_rejected():
    with pytest.raises(StepSizeError):
        mcwf_trajectory(ZERO_H, JumpChannel(SIGMA_MINUS, 30.0), EXCITED, [0, 0.01], trajectory_stream(0, 0), 0.01)


def test_grid_must_be_multiple_of_step():
    with pytest.raises(DomainError):
        mcwf_trajectory(ZERO_H, JumpChannel(SIGMA_MINUS, 1.0), EXCITED, [0, 0.015], trajectory_stream(0, 0), 0.01)


# --- deterministic integrator --------------------------------------------------------------------


def test_unitary_evolution_conserves_purity():
    H = 0.7 * SIGMA_X + 0.2 * SIGMA_Z
    rho = lindblad_integrate(H, [JumpChannel(SIGMA_MINUS, 0.0)], ket_to_rho(PLUS), np.linspace(0, 10, 101))
    purity = np.einsum("tij,tji->t", rho, rho).real
    assert np.max(np.abs(purity - 1)) < 1e-10


def test_amplitude_damping_closed_form():
    t = np.linspace(0, 5, 51)
    rho = lindblad_integrate(ZERO_H, JumpChannel(SIGMA_MINUS, 1.3), ket_to_rho(EXCITED), t)
    assert np.max(np.abs(rho[:, 0, 0].real - np.exp(-1.3 * t))) < 1e-8


def test_dephasing_channel_matches_exact_map():
    gamma = 0.8
    t = np.linspace(0, 4, 41)
    rho = lindblad_integrate(ZERO_H, JumpChannel(SIGMA_Z, gamma / 2), ket_to_rho(PLUS), t)
    for i, ti in enumerate(t):
        assert np.max(np.abs(rho[i] - apply_dephasing(ket_to_rho(PLUS), gamma * ti).rho)) < 1e-8


def test_trace_and_hermiticity_preserved():
    H = 0.4 * SIGMA_X
    chans = [JumpChannel(SIGMA_MINUS, 0.9), JumpChannel(SIGMA_Z, 0.3)]
    rho = ket_to_rho(PLUS)
    for n in range(200):
        new = lindblad_step(H, chans, rho, n * 0.01, 0.01)
        assert np.max(np.abs(new - new.conj().T)) < 1e-12
        assert abs(np.trace(new) - 1) < 1e-9 * 0.01
        rho = new
    assert np.linalg.eigvalsh(rho).min() > -1e-9


def test_semigroup_property():
    H = 0.5 * SIGMA_X
    chans = [JumpChannel(SIGMA_MINUS, 0.7), JumpChannel(SIGMA_Z, 0.2)]
    rho0 = QubitState.from_bloch([0.3, -0.4, 0.5])
    full = lindblad_integrate(H, chans, rho0, np.linspace(0, 3.0, 301))[-1]
    half = lindblad_integrate(H, chans, rho0, np.linspace(0, 1.2, 121))[-1]
    split = lindblad_integrate(H, chans, half, np.linspace(0, 1.8, 181))[-1]
    assert np.max(np.abs(full - split)) < 1e-8


def test_unstable_step_detected():
    with pytest.raises(StepSizeError):
        lindblad_integrate(ZERO_H, JumpChannel(SIGMA_MINUS, 500.0), ket_to_rho(EXCITED), [0, 1.0], substeps=1)


# --- single trajectories -----------------------------------------------------------------------------


def test_no_jumps_without_dissipation():
    H = SIGMA_X
    grid = np.linspace(0, 3, 31)
    states, rec = mcwf_trajectory(H, JumpChannel(SIGMA_MINUS, 0.0), EXCITED, grid, trajectory_stream(1, 0), 0.01)
    assert rec.times == []
    # exp(-i sx t)|e> = cos t |e> - i sin t |g>
    ref = np.stack([np.cos(grid), -1j * np.sin(grid)], axis=1)
    assert np.max(np.abs(states - ref)) < 1e-12


def test_decay_jump_lands_in_ground_state_once():
    grid = np.linspace(0, 10, 101)
    for i in range(20):
        states, rec = mcwf_trajectory(ZERO_H, JumpChannel(SIGMA_MINUS, 1.0), EXCITED, grid, trajectory_stream(3, i), 0.01)
        assert len(rec.times) <= 1
        if rec.times:
            after = grid >= rec.times[0] - 1e-12
            assert np.allclose(np.abs(states[after, 1]), 1.0, atol=1e-15)
            assert np.all(states[after, 0] == 0)


def test_trajectory_matches_ensemble_member():
    grid = np.linspace(0, 4, 41)
    ch = JumpChannel(SIGMA_MINUS, 1.0)
    res = ensemble_average(EnsembleConfig(6, 0.01, 5), ZERO_H, ch, PLUS, grid, chunk=4)
    for i in range(6):
        _, rec = mcwf_trajectory(ZERO_H, ch, PLUS, grid, trajectory_stream(5, i), 0.01)
        assert rec == res.jumps[i]
    states, _ = mcwf_trajectory(ZERO_H, ch, PLUS, grid, trajectory_stream(5, 0), 0.01)
    one = ensemble_average(EnsembleConfig(1, 0.01, 5), ZERO_H, ch, PLUS, grid)
    assert np.allclose(one.rho, ket_to_rho(states), atol=1e-15)


def test_waiting_times_exponential(decay_ensemble):
    _, res = decay_ensemble
    w = waiting_times(res.jumps)
    t_max = 5.0
    # jumps are recorded at the end of their step, so shift by half a step;
    # the law is conditional on a jump before t_max
    def cdf(x):
        return (1 - np.exp(-np.clip(x, 0, t_max))) / (1 - math.exp(-t_max))

    assert stats.kstest(w - 0.0025, cdf).pvalue > 0.01
    assert len(w) == pytest.approx(10_000 * (1 - math.exp(-t_max)), abs=4 * math.sqrt(10_000 * math.exp(-t_max)))


# --- ensembles -------------------------------------------------------------------------------------------


def test_ensemble_matches_exponential_decay(decay_ensemble):
    grid, res = decay_ensemble
    z = np.abs(res.rho[1:, 0, 0].real - np.exp(-grid[1:])) / res.stderr00[1:]
    assert z.max() < 3
    assert res.rho[0, 0, 0] == 1.0


def test_ensemble_matches_lindblad(decay_ensemble):
    grid, res = decay_ensemble
    ref = lindblad_integrate(ZERO_H, JumpChannel(SIGMA_MINUS, 1.0), ket_to_rho(EXCITED), grid)
    diff = np.abs(res.rho[1:, 0, 0].real - ref[1:, 0, 0].real)
    assert np.all(diff < 3 * res.stderr00[1:])


def test_ensemble_trace_is_one(decay_ensemble):
    _, res = decay_ensemble
    assert np.max(np.abs(np.einsum("tii->t", res.rho) - 1)) < 1e-14


def test_ensemble_dephasing_matches_exact_map():
    gamma = 1.0
    grid = np.linspace(0, 3, 31)
    res = ensemble_average(EnsembleConfig(10_000, 0.005, 2), ZERO_H, JumpChannel(SIGMA_Z, gamma / 2), PLUS, grid)
    ref = np.array([apply_dephasing(ket_to_rho(PLUS), gamma * t).rho[0, 1].real for t in grid])
    se = res.stderr[:, 0, 1].real
    assert np.all(np.abs(res.rho[1:, 0, 1].real - ref[1:]) < 3 * se[1:])


def test_single_unitary_member_is_pure():
    grid = np.linspace(0, 2, 11)
    res = ensemble_average(EnsembleConfig(1, 0.01, 0), SIGMA_X, JumpChannel(SIGMA_MINUS, 0.0), EXCITED, grid)
    ref = ket_to_rho(np.stack([np.cos(grid), -1j * np.sin(grid)], axis=1))
    assert np.max(np.abs(res.rho - ref)) < 1e-12
    assert np.all(res.stderr == 0)


def test_step_refinement_within_statistics():
    grid = np.linspace(0, 3, 31)
    ch = JumpChannel(SIGMA_MINUS, 1.0)
    a = ensemble_average(EnsembleConfig(10_000, 0.01, 9), ZERO_H, ch, EXCITED, grid)
    b = ensemble_average(EnsembleConfig(10_000, 0.005, 9), ZERO_H, ch, EXCITED, grid)
    se = np.hypot(a.stderr00, b.stderr00)[1:]
    assert np.all(np.abs(a.rho[1:, 0, 0] - b.rho[1:, 0, 0]).real < 3 * se)


def test_time_dependent_rate():
    grid = np.linspace(0, 2, 21)
    ch = JumpChannel(SIGMA_MINUS, lambda t: 2 * t)
    res = ensemble_average(EnsembleConfig(10_000, 0.005, 4), ZERO_H, ch, EXCITED, grid)
    ref = np.exp(-grid**2)
    assert np.all(np.abs(res.rho[1:, 0, 0].real - ref[1:]) < 3 * res.stderr00[1:] + 1e-12)


def test_multichannel_matches_lindblad():
    grid = np.linspace(0, 2, 21)
    H = 0.5 * SIGMA_X
    chans = [JumpChannel(SIGMA_MINUS, 0.8), JumpChannel(SIGMA_Z, 0.4)]
    res = ensemble_average(EnsembleConfig(10_000, 0.005, 6), H, chans, PLUS, grid)
    ref = lindblad_integrate(H, chans, ket_to_rho(PLUS), grid)
    for i, j in ((0, 0), (0, 1)):
        d_re = np.abs(res.rho[1:, i, j].real - ref[1:, i, j].real)
        assert np.all(d_re < 3.5 * res.stderr[1:, i, j].real + 1e-12)


def test_ensemble_deterministic_and_chunk_independent():
    grid = np.linspace(0, 1, 11)
    ch = JumpChannel(SIGMA_MINUS, 1.0)
    a = ensemble_average(EnsembleConfig(300, 0.01, 12), ZERO_H, ch, EXCITED, grid)
    b = ensemble_average(EnsembleConfig(300, 0.01, 12), ZERO_H, ch, EXCITED, grid, chunk=64)
    assert np.allclose(a.rho, b.rho, atol=1e-15, rtol=0)
    assert [r.times for r in a.jumps] == [r.times for r in b.jumps]


def test_csv_outputs(tmp_path, decay_ensemble):
    _, res = decay_ensemble
    res.to_csv(tmp_path / "e.csv")
    res.jumps_to_csv(tmp_path / "j.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "t,rho00,Re_rho01,Im_rho01,rho11,stderr00"
    assert (tmp_path / "j.csv").read_text().splitlines()[0] == "traj,jump_time"
