import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants as const
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

from dicke_emission.errors import DomainError
from dicke_emission.geometry import (
    CA40_ION_MASS,
    DEFAULT_LASER_ANGLE,
    TrapGeometry,
    calibrate_laser_angle,
    collective_modes,
    debye_waller,
    equilibrium_distance,
    equilibrium_separation,
    optical_phase,
    experiment_geometry,
)

TWO_PI = 2 * math.pi
LAM = 397e-9


def simple_geometry(k_hat=(0, 0, 1), d_vec=(LAM / 2, 0, 0)):
    return TrapGeometry(
        wavelength=LAM,
        laser_direction=np.asarray(k_hat, float),
        separation=np.asarray(d_vec, float),
        axial_frequency=TWO_PI * 0.76e6,
        radial_frequency_1=TWO_PI * 1.275e6,
        radial_frequency_2=TWO_PI * 1.568e6,
    )


def test_optical_phase_examples():
    g = simple_geometry()
    assert optical_phase(g, g.laser_direction) == 0.0
    assert optical_phase(g, np.array([-1.0, 0, 0])) == pytest.approx(math.pi, abs=1e-12)
    # r_hat.d = k_hat.d (= 0 here): any direction perpendicular to d
    assert optical_phase(g, np.array([0, 1.0, 0])) == pytest.approx(0.0, abs=1e-12)
    g2 = simple_geometry(k_hat=(0.6, 0.8, 0), d_vec=(3e-6, 0, 0))
    r = np.array([0.6, -0.8, 0.0])  # same projection on d as k_hat
    assert min(optical_phase(g2, r), TWO_PI - optical_phase(g2, r)) < 1e-9


def test_optical_phase_rejects_non_unit():
    with pytest.raises(DomainError):
        optical_phase(simple_geometry(), np.array([1.0, 1.0, 0]))


unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.asarray(v) / np.linalg.norm(v))


def _wrapped_close(a, b, tol):
    return abs(math.remainder(a - b, TWO_PI)) < tol


@settings(max_examples=60)
@given(unit, st.floats(0, TWO_PI), st.integers(0, 2**31))
def test_frame_covariance(r_hat, angle, seed):
    k_hat = np.array([0.3, 0.5, 0.81])
    k_hat /= np.linalg.norm(k_hat)
    d = np.array([5.1e-6, -1.2e-6, 0.4e-6])
    g = simple_geometry(k_hat, d)
    rot = Rotation.from_rotvec(angle * k_hat)
    g_rot = simple_geometry(k_hat, rot.apply(d))
    assert _wrapped_close(optical_phase(g, r_hat), optical_phase(g_rot, rot.apply(r_hat)), 1e-9)
    # generic rotation of everything
    full = Rotation.random(random_state=seed)
    g_full = simple_geometry(full.apply(k_hat), full.apply(d))
    assert _wrapped_close(optical_phase(g, r_hat), optical_phase(g_full, full.apply(r_hat)), 1e-9)


@settings(max_examples=60)
@given(unit)
def test_mirror_directions(r_hat):
    g = simple_geometry((0.6, 0.0, 0.8), (6.7e-6, 0, 0))
    mirror = r_hat * np.array([-1.0, 1.0, 1.0])  # reflect across the plane normal to d
    total = optical_phase(g, r_hat) + optical_phase(g, mirror)
    assert _wrapped_close(total, 2 * g.wave_vector.dot(g.separation), 1e-9)


def test_collective_mode_frequencies():
    modes = collective_modes(experiment_geometry())
    mhz = {m.name: m.frequency / TWO_PI / 1e6 for m in modes}
    assert mhz["breathing"] == pytest.approx(math.sqrt(3) * 0.76)
    assert mhz["rocking1"] == pytest.approx(math.sqrt(1.275**2 - 0.76**2))
    assert mhz["rocking2"] == pytest.approx(math.sqrt(1.568**2 - 0.76**2))
    # quoted to three decimals
    assert mhz["breathing"] == pytest.approx(1.316, abs=1e-3)
    assert mhz["rocking1"] == pytest.approx(1.024, abs=1e-3)
    assert mhz["rocking2"] == pytest.approx(1.371, abs=1e-3)
    axes = np.array([m.axis for m in modes])
    np.testing.assert_allclose(axes @ axes.T, np.eye(3), atol=1e-9)


def test_collective_modes_need_linear_crystal():
    g = experiment_geometry(radial_frequency_1=TWO_PI * 0.5e6)
    with pytest.raises(DomainError):
        collective_modes(g)


def _force_balance_distance(w_ax, m):
    # each ion at +-d/2: Coulomb repulsion equals the trap restoring force
    f = lambda d: const.e**2 / (4 * math.pi * const.epsilon_0 * d**2) - m * w_ax**2 * d / 2  # noqa: E731
    return brentq(f, 1e-7, 1e-4, xtol=1e-18, rtol=1e-15)


def test_equilibrium_separation():
    g = experiment_geometry()
    d = equilibrium_separation(g)
    assert d == pytest.approx(_force_balance_distance(TWO_PI * 0.76e6, CA40_ION_MASS), rel=1e-12)
    assert d == pytest.approx(6.731e-6, rel=1e-3)
    assert np.linalg.norm(g.separation) == pytest.approx(d)
    assert equilibrium_distance(2 * TWO_PI * 0.76e6) == pytest.approx(d / 2 ** (2 / 3), rel=1e-12)
    assert d / LAM > 10  # d >> lambda


def test_dwf_zero_momentum_transfer():
    g = experiment_geometry()
    assert debye_waller(g, collective_modes(g), g.laser_direction) == 1.0


def test_dwf_reference_value_at_calibrated_angle():
    angle = calibrate_laser_angle(0.51)
    assert angle == pytest.approx(DEFAULT_LASER_ANGLE, abs=1e-9)
    g = experiment_geometry(angle)
    f = debye_waller(g, collective_modes(g), g.detector_axis)
    assert abs(f - 0.51) < 0.02


def test_dwf_against_closed_form():
    g = experiment_geometry()
    modes = collective_modes(g)
    q = g.wavenumber * (g.laser_direction - g.detector_axis)
    expo = sum(const.hbar * q.dot(m.axis) ** 2 / (CA40_ION_MASS * m.frequency) * (m.mean_phonons + 0.5)
               for m in modes)
    assert debye_waller(g, modes, g.detector_axis) == pytest.approx(math.exp(-expo), rel=1e-14)


def test_dwf_monotone_in_angle():
    angles = np.linspace(0.01, math.pi / 2, 50)
    f = []
    for a in angles:
        g = experiment_geometry(a)
        f.append(debye_waller(g, collective_modes(g), g.detector_axis))
    assert np.all(np.diff(f) < 0)


@settings(max_examples=40)
@given(st.sampled_from(["breathing", "rocking1", "rocking2"]), st.floats(0, 500), st.floats(0.1, 50))
def test_dwf_decreasing_in_phonons(name, n, extra):
    g = experiment_geometry()
    modes = collective_modes(g)
    f0 = debye_waller(g, modes.with_phonons(**{name: n}), g.detector_axis)
    f1 = debye_waller(g, modes.with_phonons(**{name: n + extra}), g.detector_axis)
    q = g.wavenumber * (g.laser_direction - g.detector_axis)
    if abs(q.dot(modes[name].axis)) > 0:
        assert 0 < f1 < f0 <= 1
    else:
        # in-plane scattering has no recoil along the out-of-plane rocking axis
        assert f1 == f0


def test_dwf_vanishes_for_hot_mode():
    g = experiment_geometry()
    modes = collective_modes(g)
    f = [debye_waller(g, modes.with_phonons(breathing=n), g.detector_axis) for n in (1e2, 1e3, 1e4)]
    assert f[0] > f[1] > f[2] and f[2] < 1e-10


def test_dwf_independent_of_axis_sign():
    g = experiment_geometry()
    flipped = experiment_geometry()
    object.__setattr__(flipped, "rocking_axes", ((0.0, -1.0, 0.0), (0.0, 0.0, -1.0)))
    object.__setattr__(flipped, "separation", -g.separation)
    a = debye_waller(g, collective_modes(g), g.detector_axis)
    b = debye_waller(flipped, collective_modes(flipped), flipped.detector_axis)
    assert a == pytest.approx(b, rel=1e-14)


def test_geometry_validation():
    with pytest.raises(DomainError):
        simple_geometry(k_hat=(1.0, 1.0, 0))
    with pytest.raises(DomainError):
        experiment_geometry(axial_frequency=-1.0)
