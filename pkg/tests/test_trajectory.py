import math

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import expm

from dicke_emission.errors import ConfigurationError, DomainError
from dicke_emission.states import (
    ANTISYMMETRIC,
    DOUBLY_EXCITED,
    GROUND,
    SYMMETRIC,
    TwoAtomState,
    dicke_from_product,
)
from dicke_emission.trajectory import (
    DEFAULT_DECAY_RATE,
    DriveParams,
    evolve_no_jump,
    run_trajectory,
    sample_emission,
    saturation,
    simulate_emissions,
    state_at,
)

G = DEFAULT_DECAY_RATE
P065 = DriveParams.from_saturation(0.65)


def h_eff_product(p: DriveParams):
    """Effective Hamiltonian built from Pauli matrices (independent of the propagator code)."""
    sm = np.array([[0, 1], [0, 0]], complex)  # (g, e) ordering
    sp = sm.conj().T
    n = sp @ sm
    eye = np.eye(2)
    ph1, ph2 = p.laser_phases

    def single(ph):
        return (0.5 * p.rabi_frequency * (np.exp(1j * ph) * sp + np.exp(-1j * ph) * sm)
                - p.detuning * n - 0.5j * p.decay_rate * n)

    return np.kron(eye, single(ph1)) + np.kron(single(ph2), eye)


def obe_populations(p: DriveParams, times):
    """Excited population of one driven atom from the Lindblad equation (vectorized rho)."""
    sm = np.array([[0, 1], [0, 0]], complex)
    sp = sm.conj().T
    h = 0.5 * p.rabi_frequency * (sp + sm) - p.detuning * sp @ sm
    eye = np.eye(2)
    # column-stacking vec: vec(A X B) = (B^T kron A) vec(X)
    lind = (-1j * (np.kron(eye, h) - np.kron(h.T, eye))
            + p.decay_rate * (np.kron(sm.conj(), sm)
                              - 0.5 * np.kron(eye, sp @ sm) - 0.5 * np.kron((sp @ sm).T, eye)))
    rho0 = np.array([[1, 0], [0, 0]], complex).reshape(-1, order="F")
    out = []
    for t in times:
        rho = (expm(lind * t) @ rho0).reshape(2, 2, order="F")
        out.append(rho[1, 1].real)
    return np.array(out)


def test_saturation_convention():
    p = DriveParams(rabi_frequency=0.3 * G, decay_rate=G)
    assert saturation(p) == pytest.approx(2 * 0.09)
    assert P065.saturation == pytest.approx(0.65, rel=1e-14)
    assert P065.steady_state_excitation() == pytest.approx(0.65 / 3.3)
    q = DriveParams.from_saturation(0.65, detuning=0.4 * G)
    assert q.saturation == pytest.approx(0.65, rel=1e-14)


def test_drive_validation():
    with pytest.raises(ConfigurationError):
        DriveParams(rabi_frequency=-1.0)
    with pytest.raises(ConfigurationError):
        DriveParams(rabi_frequency=1.0, decay_rate=0.0)


def test_no_jump_examples():
    p0 = DriveParams(rabi_frequency=0.0)
    dt = 2.3e-9
    out, surv = evolve_no_jump(GROUND, p0, dt)
    assert surv == 1.0 and out.fidelity(GROUND) == 1.0
    _, surv = evolve_no_jump(DOUBLY_EXCITED, p0, dt)
    assert surv == pytest.approx(math.exp(-2 * G * dt), rel=1e-12)
    out, surv = evolve_no_jump(ANTISYMMETRIC, p0, dt)
    assert surv == pytest.approx(math.exp(-G * dt), rel=1e-12)
    assert out.fidelity(ANTISYMMETRIC) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("params", [
    P065,
    DriveParams.from_saturation(3.0, detuning=0.7 * G),
    DriveParams(rabi_frequency=0.8 * G, detuning=-0.3 * G, laser_phases=(0.4, 2.1)),
    DriveParams(rabi_frequency=G / 2, detuning=0.5 * G),  # degenerate eigenvalues
])
@pytest.mark.parametrize("dt", [1e-13, 3e-10, 7e-9, 4e-8])
def test_no_jump_matches_matrix_exponential(params, dt):
    psi = dicke_from_product(0.3, 0.5 - 0.2j, 0.1j, 0.6)
    expect = expm(-1j * h_eff_product(params) * dt) @ psi.to_product()
    out, surv = evolve_no_jump(psi, params, dt)
    np.testing.assert_allclose(out.to_product(), expect, atol=1e-12)
    assert surv == pytest.approx(np.vdot(expect, expect).real, rel=1e-12)


def test_no_jump_requires_positive_step():
    with pytest.raises(DomainError):
        evolve_no_jump(GROUND, P065, 0.0)


def test_sample_emission_distribution():
    rng = np.random.default_rng(5)
    draws = np.array([sample_emission(SYMMETRIC, rng) for _ in range(4000)])
    assert np.all((draws >= 0) & (draws < 2 * np.pi))
    cdf = lambda d: (d + np.sin(d)) / (2 * np.pi)  # noqa: E731
    assert stats.kstest(draws, cdf).pvalue > 0.01
    draws = np.array([sample_emission(ANTISYMMETRIC, rng) for _ in range(4000)])
    assert stats.kstest(draws, lambda d: (d - np.sin(d)) / (2 * np.pi)).pvalue > 0.01
    eg = dicke_from_product(0, 1, 0, 0)
    draws = np.array([sample_emission(eg, rng) for _ in range(4000)])
    assert stats.kstest(draws / (2 * np.pi), "uniform").pvalue > 0.01
    with pytest.raises(DomainError):
        sample_emission(GROUND, rng)


def test_undriven_trajectory_is_empty():
    p = DriveParams(rabi_frequency=0.0)
    assert run_trajectory(p, 1e-3, np.random.default_rng(0)) == []


def test_undriven_excited_pair_emits_two_photons():
    p = DriveParams(rabi_frequency=0.0)
    recs = run_trajectory(p, 1e-5, np.random.default_rng(3), initial_state=DOUBLY_EXCITED)
    assert len(recs) == 2
    assert recs[-1].post_jump_state.fidelity(GROUND) == pytest.approx(1.0)


def test_records_are_consistent():
    recs = run_trajectory(P065, 5e-6, np.random.default_rng(11))
    assert len(recs) > 100
    times = np.array([r.time for r in recs])
    assert np.all(np.diff(times) > 0) and times[-1] < 5e-6
    for r in recs:
        assert r.post_jump_state.is_normalized
        assert 0 <= r.delta < 2 * np.pi
    # state just after a jump is the stored post-jump state
    assert state_at(recs, P065, recs[5].time).fidelity(recs[5].post_jump_state) == 1.0


def test_trajectory_determinism():
    a = simulate_emissions(P065, 2e-5, np.random.default_rng(42), store_states=True)
    b = simulate_emissions(P065, 2e-5, np.random.default_rng(42), store_states=True)
    assert a.times.tobytes() == b.times.tobytes()
    assert a.deltas.tobytes() == b.deltas.tobytes()
    assert a.states.tobytes() == b.states.tobytes()
    # block size only changes how uniforms are chunked, not their order
    c = simulate_emissions(P065, 2e-5, np.random.default_rng(42), block=64)
    assert c.times.tobytes() == a.times.tobytes()


def test_step_underflow_is_configuration_error():
    with pytest.raises(ConfigurationError):
        simulate_emissions(DriveParams(rabi_frequency=2e4 * G), 1e-6, np.random.default_rng(0))
    with pytest.raises(DomainError):
        simulate_emissions(P065, 0.0, np.random.default_rng(0))


def test_steady_state_emission_rate():
    duration = 4e-3
    arr = simulate_emissions(P065, duration, np.random.default_rng(7))
    n = arr.times.size
    rho_ee = n / (2 * G * duration)
    # jump counts are sub-Poissonian for a driven atom; sqrt(n) is a generous error
    assert abs(rho_ee - 0.65 / 3.3) < 4 * math.sqrt(n) / (2 * G * duration)


def test_steady_state_population_at_random_times():
    duration = 2e-3
    rng = np.random.default_rng(9)
    arr = simulate_emissions(P065, duration, rng, store_states=True)
    probe = np.sort(rng.uniform(1e-6, duration, 3000))
    idx = np.searchsorted(arr.times, probe) - 1
    pops = []
    for t, i in zip(probe, idx):
        ref = dicke_from_product(*arr.states[i]) if i >= 0 else GROUND
        t0 = arr.times[i] if i >= 0 else 0.0
        pops.append(evolve_no_jump(ref, P065, t - t0)[0].normalized().excited_population() / 2)
    pops = np.array(pops)
    # probes far apart compared with 1/Gamma are nearly independent
    assert abs(pops.mean() - 0.65 / 3.3) < 3 * pops.std() / math.sqrt(pops.size) + 2e-3


@pytest.mark.slow
def test_ensemble_average_matches_master_equation():
    params = DriveParams.from_saturation(2.0, detuning=0.25 * G)
    times = np.array([2e-9, 5e-9, 10e-9, 20e-9, 40e-9])
    n_traj = 10000
    root = np.random.SeedSequence(123)
    n_sum = np.zeros((n_traj, times.size))
    both = np.zeros((n_traj, times.size))
    for j, seed in enumerate(root.spawn(n_traj)):
        arr = simulate_emissions(params, times[-1] * 1.001, np.random.default_rng(seed),
                                 store_states=True)
        idx = np.searchsorted(arr.times, times, side="right") - 1
        for k, (t, i) in enumerate(zip(times, idx)):
            ref = dicke_from_product(*arr.states[i]) if i >= 0 else GROUND
            t0 = arr.times[i] if i >= 0 else 0.0
            psi = evolve_no_jump(ref, params, t - t0)[0].normalized()
            n_sum[j, k] = psi.excited_population()
            both[j, k] = abs(psi.c_ee) ** 2
    rho = obe_populations(params, times)
    sem = n_sum.std(axis=0) / math.sqrt(n_traj)
    np.testing.assert_array_less(np.abs(n_sum.mean(axis=0) - 2 * rho), 3 * sem)
    # independent atoms: <n1 n2> = rho_ee^2
    sem2 = both.std(axis=0) / math.sqrt(n_traj)
    np.testing.assert_array_less(np.abs(both.mean(axis=0) - rho**2), 3 * sem2 + 1e-12)
