"""Quantum-jump unraveling for two independently driven two-level atoms.

Every photon is unravelled by direction: the jump operators are
``sqrt(Gamma / 2 pi) D(delta)`` for ``delta`` uniform on ``[0, 2 pi)``,
which integrate to the usual independent-decay dissipator. Between
jumps the effective Hamiltonian is a sum of single-atom terms, so the
no-jump propagator factorizes as ``u1(t) (x) u2(t)``; each factor is a
2x2 matrix exponential evaluated in closed form.

State vectors inside the kernels use the product ordering
``(gg, eg, ge, ee)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigurationError, DomainError
from .states import TwoAtomState, dicke_from_product

TWO_PI = 2.0 * math.pi

# 40Ca+ P1/2 lifetime
DEFAULT_DECAY_RATE = 1.0 / 6.9e-9


@dataclass(frozen=True)
class DriveParams:
    """Laser drive and decay of each atom (angular frequencies in rad/s)."""

    rabi_frequency: float
    detuning: float = 0.0
    decay_rate: float = DEFAULT_DECAY_RATE
    laser_phases: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.decay_rate > 0 and math.isfinite(self.decay_rate)):
            raise ConfigurationError("decay rate must be positive", field="decay_rate")
        if not (self.rabi_frequency >= 0 and math.isfinite(self.rabi_frequency)):
            raise ConfigurationError("Rabi frequency must be >= 0", field="rabi_frequency")
        if not math.isfinite(self.detuning):
            raise ConfigurationError("detuning must be finite", field="detuning")
        object.__setattr__(self, "laser_phases", tuple(float(p) for p in self.laser_phases))
        if len(self.laser_phases) != 2:
            raise ConfigurationError("need one laser phase per atom", field="laser_phases")

    @classmethod
    def from_saturation(cls, s, decay_rate=DEFAULT_DECAY_RATE, detuning=0.0):
        """Drive realizing saturation ``s = 2 Omega^2 / (Gamma^2 + 4 Delta^2)``."""
        if s < 0:
            raise ConfigurationError("saturation must be >= 0", field="saturation")
        rabi = math.sqrt(s * (decay_rate**2 + 4.0 * detuning**2) / 2.0)
        return cls(rabi_frequency=rabi, detuning=detuning, decay_rate=decay_rate)

    @property
    def saturation(self) -> float:
        return saturation(self)

    def steady_state_excitation(self) -> float:
        """Steady-state excited population of one atom, ``s / (2 (1 + s))``."""
        s = self.saturation
        return s / (2.0 * (1.0 + s))

    def emission_rate(self) -> float:
        """Mean photon emission rate of the pair in steady state (1/s)."""
        return 2.0 * self.decay_rate * self.steady_state_excitation()


def saturation(params: DriveParams) -> float:
    g, om, dl = params.decay_rate, params.rabi_frequency, params.detuning
    return 2.0 * om**2 / (g**2 + 4.0 * dl**2)


@dataclass(frozen=True)
class EmissionRecord:
    time: float
    delta: float
    post_jump_state: TwoAtomState


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _drive_constants(rabi, detuning, gamma, ph1, ph2):
    """Constants of ``M = -i H_eff`` for both atoms, basis (g, e).

    ``M = T/2 + N`` with ``N`` traceless, ``N^2 = mu^2``; only the
    off-diagonal elements depend on the per-atom laser phase.
    """
    m11 = 1j * detuning - 0.5 * gamma
    half_tr = 0.5 * m11
    n00 = -half_tr
    m01a = -0.5j * rabi * cmath.exp(-1j * ph1)
    m10a = -0.5j * rabi * cmath.exp(1j * ph1)
    m01b = -0.5j * rabi * cmath.exp(-1j * ph2)
    m10b = -0.5j * rabi * cmath.exp(1j * ph2)
    mu = cmath.sqrt(n00 * n00 + m01a * m10a)
    if mu.real < 0.0:
        mu = -mu
    return half_tr, mu, n00, m01a, m10a, m01b, m10b


@numba.njit(cache=True, nogil=True)
def _cosh_sinh(t, half_tr, mu):
    """``e^{T t/2} cosh(mu t)`` and ``e^{T t/2} sinh(mu t)/mu``.

    Written with decaying exponentials only so long times never overflow.
    """
    x = mu * t
    if abs(x) < 1e-2:
        base = cmath.exp(half_tr * t)
        x2 = x * x
        ch = base * (1.0 + x2 / 2.0 + x2 * x2 / 24.0 + x2 * x2 * x2 / 720.0)
        sh = base * t * (1.0 + x2 / 6.0 + x2 * x2 / 120.0 + x2 * x2 * x2 / 5040.0)
    else:
        ep = cmath.exp((half_tr + mu) * t)
        em = cmath.exp((half_tr - mu) * t)
        ch = 0.5 * (ep + em)
        sh = (ep - em) / (2.0 * mu)
    return ch, sh


@numba.njit(cache=True, nogil=True)
def _evolve(psi, t, k):
    """Apply ``u1 (x) u2`` to a product-basis vector; returns a new tuple."""
    half_tr, mu, n00, m01a, m10a, m01b, m10b = k
    ch, sh = _cosh_sinh(t, half_tr, mu)
    d0 = ch + sh * n00
    d1 = ch - sh * n00
    a01 = sh * m01a
    a10 = sh * m10a
    b01 = sh * m01b
    b10 = sh * m10b
    p_gg, p_eg, p_ge, p_ee = psi[0], psi[1], psi[2], psi[3]
    # atom 1 acts on the first label
    q_gg = d0 * p_gg + a01 * p_eg
    q_eg = a10 * p_gg + d1 * p_eg
    q_ge = d0 * p_ge + a01 * p_ee
    q_ee = a10 * p_ge + d1 * p_ee
    # atom 2 acts on the second label
    r_gg = d0 * q_gg + b01 * q_ge
    r_ge = b10 * q_gg + d1 * q_ge
    r_eg = d0 * q_eg + b01 * q_ee
    r_ee = b10 * q_eg + d1 * q_ee
    return r_gg, r_eg, r_ge, r_ee


@numba.njit(cache=True, nogil=True)
def _survival(psi, t, k, gamma):
    r_gg, r_eg, r_ge, r_ee = _evolve(psi, t, k)
    a1 = abs(r_eg) ** 2
    a2 = abs(r_ge) ** 2
    a3 = abs(r_ee) ** 2
    norm = abs(r_gg) ** 2 + a1 + a2 + a3
    dnorm = -gamma * (a1 + a2 + 2.0 * a3)
    return norm, dnorm


@numba.njit(cache=True, nogil=True)
def _solve_jump_time(psi, threshold, t_max, k, gamma, driven):
    """First time in ``(0, t_max]`` where the survival drops to ``threshold``.

    Returns -1.0 when the survival stays above the threshold up to ``t_max``.
    """
    tol = 1e-9 / gamma
    h = 0.25 / gamma
    t_lo = 0.0
    n_lo = 1.0
    while True:
        t_hi = t_lo + h
        if t_hi >= t_max:
            t_hi = t_max
        n_hi, _ = _survival(psi, t_hi, k, gamma)
        if n_hi <= threshold:
            break
        if t_hi >= t_max:
            return -1.0
        if n_hi >= n_lo and not driven:
            # no drive and nothing left to decay: survival is frozen
            return -1.0
        t_lo = t_hi
        n_lo = n_hi
        h *= 2.0
    # safeguarded Newton on a monotone function
    t = 0.5 * (t_lo + t_hi)
    for _ in range(200):
        n, dn = _survival(psi, t, k, gamma)
        f = n - threshold
        if f > 0.0:
            t_lo = t
        else:
            t_hi = t
        if t_hi - t_lo < tol:
            break
        if dn < 0.0:
            t_new = t - f / dn
        else:
            t_new = -1.0
        if t_new <= t_lo or t_new >= t_hi:
            t_new = 0.5 * (t_lo + t_hi)
        if abs(t_new - t) < tol:
            t = t_new
            break
        t = t_new
    return t


@numba.njit(cache=True, nogil=True)
def _sample_delta(a, b, c, u):
    """Inverse CDF of ``(a + b cos d + c sin d) / (2 pi a)`` on ``[0, 2 pi)``."""
    target = u * TWO_PI * a
    lo = 0.0
    hi = TWO_PI
    d = TWO_PI * u
    for _ in range(200):
        f = a * d + b * math.sin(d) + c * (1.0 - math.cos(d)) - target
        if f > 0.0:
            hi = d
        else:
            lo = d
        if hi - lo < 1e-13:
            break
        df = a + b * math.cos(d) + c * math.sin(d)
        if df > 0.0:
            d_new = d - f / df
        else:
            d_new = -1.0
        if d_new <= lo or d_new >= hi:
            d_new = 0.5 * (lo + hi)
        if abs(d_new - d) < 1e-14:
            d = d_new
            break
        d = d_new
    if d >= TWO_PI:
        d -= TWO_PI
    return d


@numba.njit(cache=True, nogil=True)
def _run_block(psi, t_ref, t_end, rabi, detuning, gamma, ph1, ph2,
               uniforms, out_t, out_delta, out_psi, store_states):
    """Advance a trajectory jump by jump using pre-drawn uniforms.

    ``psi`` (normalized, product basis) is updated in place and refers to
    time ``t_ref``. Each jump consumes one row of ``uniforms``. Stops when
    the uniforms run out or no further jump occurs before ``t_end``.
    Returns ``(n_jumps, t_ref, finished)``.
    """
    k = _drive_constants(rabi, detuning, gamma, ph1, ph2)
    driven = rabi > 0.0
    n = 0
    for i in range(uniforms.shape[0]):
        threshold = 1.0 - uniforms[i, 0]
        dt = _solve_jump_time(psi, threshold, t_end - t_ref, k, gamma, driven)
        if dt < 0.0:
            return n, t_ref, True
        p_gg, p_eg, p_ge, p_ee = _evolve(psi, dt, k)
        norm = math.sqrt(abs(p_gg) ** 2 + abs(p_eg) ** 2 + abs(p_ge) ** 2 + abs(p_ee) ** 2)
        p_gg /= norm
        p_eg /= norm
        p_ge /= norm
        p_ee /= norm
        a = abs(p_eg) ** 2 + abs(p_ge) ** 2 + 2.0 * abs(p_ee) ** 2
        cross = p_eg.conjugate() * p_ge
        delta = _sample_delta(a, 2.0 * cross.real, -2.0 * cross.imag, uniforms[i, 1])
        ph = cmath.exp(1j * delta)
        j_gg = p_eg + ph * p_ge
        j_eg = ph * p_ee
        j_ge = p_ee
        w = math.sqrt(abs(j_gg) ** 2 + abs(j_eg) ** 2 + abs(j_ge) ** 2)
        psi[0] = j_gg / w
        psi[1] = j_eg / w
        psi[2] = j_ge / w
        psi[3] = 0.0
        t_ref = t_ref + dt
        out_t[n] = t_ref
        out_delta[n] = delta
        if store_states:
            for j in range(4):
                out_psi[n, j] = psi[j]
        n += 1
    return n, t_ref, False


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def evolve_no_jump(state: TwoAtomState, params: DriveParams, dt: float):
    """Propagate under the effective non-Hermitian Hamiltonian for ``dt``.

    Returns the unnormalized state and its squared norm (the no-jump
    survival probability). The propagator is exact, not a time stepper.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    ph1, ph2 = params.laser_phases
    psi = state.to_product()
    out = np.array(
        _evolve(psi, float(dt), _drive_constants(params.rabi_frequency, params.detuning,
                                                 params.decay_rate, ph1, ph2)),
        dtype=complex,
    )
    new = TwoAtomState.from_product(out)
    return new, new.norm_squared


def sample_emission(state: TwoAtomState, rng: np.random.Generator) -> float:
    """Draw an emission phase from ``<D^dag(d) D(d)>`` normalized on ``[0, 2 pi)``."""
    from .states import emission_density_coefficients

    a, b, c = emission_density_coefficients(state.normalized())
    if a <= 1e-300:
        raise DomainError("state has no excited population")
    return float(_sample_delta(a, b, c, float(rng.random())))


@dataclass
class EmissionArrays:
    """Columnar emission stream of one trajectory (times in seconds)."""

    times: np.ndarray
    deltas: np.ndarray
    states: np.ndarray | None = None  # product basis, shape (n, 4)

    def __len__(self):
        return len(self.times)


def _check_duration(params: DriveParams, duration: float):
    if not duration > 0:
        raise DomainError("duration must be positive")
    # jump times are resolved to 1e-9/Gamma relative to the last jump;
    # that resolution must survive addition to the absolute trajectory time
    if duration * np.finfo(float).eps * 16 > 1e-3 / params.decay_rate:
        raise ConfigurationError(
            "trajectory duration too long for the jump-time resolution; "
            "split the run into more trajectories",
            field="duration",
        )
    if params.rabi_frequency > 1e4 * params.decay_rate:
        raise ConfigurationError(
            "Rabi frequency exceeds 1e4 decay rates; time-step underflow",
            field="rabi_frequency",
        )


def simulate_emissions(params: DriveParams, duration: float, rng: np.random.Generator,
                       store_states: bool = False, initial_state: TwoAtomState | None = None,
                       block: int | None = None) -> EmissionArrays:
    """Run one trajectory starting in ``|g,g>`` and return its emissions."""
    _check_duration(params, duration)
    ph1, ph2 = params.laser_phases
    if initial_state is None:
        psi = np.array([1, 0, 0, 0], dtype=np.complex128)
    else:
        psi = np.ascontiguousarray(initial_state.normalized().to_product(), dtype=np.complex128)
    if params.rabi_frequency == 0.0 and initial_state is None:
        empty = np.empty(0)
        return EmissionArrays(empty, empty.copy(), np.empty((0, 4), complex) if store_states else None)
    if block is None:
        expected = duration * params.emission_rate()
        block = int(min(1 << 17, max(64, 1.2 * expected + 64)))
    times, deltas, states = [], [], []
    t_ref = 0.0
    finished = False
    while not finished:
        uniforms = rng.random((block, 2))
        out_t = np.empty(block)
        out_d = np.empty(block)
        out_psi = np.empty((block if store_states else 0, 4), dtype=np.complex128)
        n, t_ref, finished = _run_block(
            psi, t_ref, float(duration), params.rabi_frequency, params.detuning,
            params.decay_rate, ph1, ph2, uniforms, out_t, out_d, out_psi, store_states,
        )
        times.append(out_t[:n])
        deltas.append(out_d[:n])
        if store_states:
            states.append(out_psi[:n])
    return EmissionArrays(
        np.concatenate(times),
        np.concatenate(deltas),
        np.concatenate(states) if store_states else None,
    )


def run_trajectory(params: DriveParams, duration: float, rng: np.random.Generator,
                   initial_state: TwoAtomState | None = None) -> list[EmissionRecord]:
    """Record every emission of one trajectory with its post-jump state."""
    arr = simulate_emissions(params, duration, rng, store_states=True,
                             initial_state=initial_state)
    return [
        EmissionRecord(float(t), float(d), dicke_from_product(*psi))
        for t, d, psi in zip(arr.times, arr.deltas, arr.states)
    ]


def state_at(records: list[EmissionRecord], params: DriveParams, t: float,
             initial_state: TwoAtomState | None = None) -> TwoAtomState:
    """Normalized conditional state at time ``t`` along a recorded trajectory."""
    from .states import GROUND

    ref_state = GROUND if initial_state is None else initial_state.normalized()
    ref_time = 0.0
    for rec in records:
        if rec.time > t:
            break
        ref_state, ref_time = rec.post_jump_state, rec.time
    if t == ref_time:
        return ref_state
    evolved, _ = evolve_no_jump(ref_state, params, t - ref_time)
    return evolved.normalized()
