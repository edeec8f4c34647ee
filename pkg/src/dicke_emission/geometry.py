"""Detection geometry, collective modes and the Debye-Waller factor.

Lab frame: ``x`` along the ion separation, ``z`` along the quantization
axis (vertical), ``y`` completing the right-handed triad. Laser and
detector axes lie in the horizontal ``x``-``y`` plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as const
from scipy.optimize import brentq

from .errors import DomainError

TWO_PI = 2.0 * math.pi
UNIT_TOL = 1e-12

CA40_ION_MASS = 39.962590863 * const.atomic_mass - const.electron_mass

# Inferred, not measured: angle between laser and detector axis that makes
# the Debye-Waller factor at the detector axis equal 0.51 for the default
# trap. Reproduce with calibrate_laser_angle().
DEFAULT_LASER_ANGLE = 1.0183578056788167  # rad, about 58.35 deg

MODE_NAMES = ("breathing", "rocking1", "rocking2")


def _unit(v, name="vector"):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if v.shape != (3,) or not np.isfinite(n) or n == 0:
        raise DomainError(f"{name} must be a nonzero 3-vector")
    return v / n


def _check_unit(v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise DomainError(f"{name} must be a unit 3-vector")
    return v


@dataclass(frozen=True)
class TrapGeometry:
    wavelength: float
    laser_direction: np.ndarray
    separation: np.ndarray
    axial_frequency: float
    radial_frequency_1: float
    radial_frequency_2: float
    ion_mass: float = CA40_ION_MASS
    detector_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    phonon_numbers: tuple = (15.0, 9.0, 7.0)
    # rocking1 lies in the detection plane, rocking2 along the quantization axis
    rocking_axes: tuple = ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    def __post_init__(self):
        for name in ("laser_direction", "separation", "detector_axis"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        _check_unit(self.laser_direction, "laser direction")
        _check_unit(self.detector_axis, "detector axis")
        if self.separation.shape != (3,) or not np.all(np.isfinite(self.separation)):
            raise DomainError("separation must be a finite 3-vector")
        if not self.wavelength > 0:
            raise DomainError("wavelength must be positive")
        if not self.ion_mass > 0:
            raise DomainError("ion mass must be positive")
        freqs = (self.axial_frequency, self.radial_frequency_1, self.radial_frequency_2)
        if not all(f > 0 for f in freqs):
            raise DomainError("trap frequencies must be positive")
        if len(self.phonon_numbers) != 3 or any(n < 0 for n in self.phonon_numbers):
            raise DomainError("need three non-negative phonon numbers")
        object.__setattr__(self, "phonon_numbers", tuple(float(n) for n in self.phonon_numbers))
        object.__setattr__(self, "rocking_axes", tuple(tuple(float(c) for c in ax) for ax in self.rocking_axes))

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength

    @property
    def wave_vector(self) -> np.ndarray:
        return self.wavenumber * self.laser_direction


def laser_direction_for_angle(angle: float, detector_axis=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Horizontal laser direction at ``angle`` from the detector axis, tilted toward ``+x``."""
    det = _unit(detector_axis, "detector axis")
    xhat = np.array([1.0, 0.0, 0.0])
    perp = xhat - det.dot(xhat) * det
    perp = _unit(perp, "in-plane normal")
    return math.cos(angle) * det + math.sin(angle) * perp


def experiment_geometry(laser_angle: float = DEFAULT_LASER_ANGLE, wavelength: float = 397e-9,
                   axial_frequency: float = TWO_PI * 0.76e6,
                   radial_frequency_1: float = TWO_PI * 1.275e6,
                   radial_frequency_2: float = TWO_PI * 1.568e6,
                   ion_mass: float = CA40_ION_MASS,
                   phonon_numbers=(15.0, 9.0, 7.0)) -> TrapGeometry:
    """Two 40Ca+ ions at Coulomb equilibrium along ``x``, detector along ``y``."""
    d = equilibrium_distance(axial_frequency, ion_mass)
    return TrapGeometry(
        wavelength=wavelength,
        laser_direction=laser_direction_for_angle(laser_angle),
        separation=np.array([d, 0.0, 0.0]),
        axial_frequency=axial_frequency,
        radial_frequency_1=radial_frequency_1,
        radial_frequency_2=radial_frequency_2,
        ion_mass=ion_mass,
        phonon_numbers=phonon_numbers,
    )


def momentum_transfer(geom: TrapGeometry, r_hat) -> np.ndarray:
    """``q = k_L - k_L r_hat`` (1/m)."""
    r_hat = _check_unit(r_hat, "direction")
    return geom.wavenumber * (geom.laser_direction - r_hat)


def optical_phase(geom: TrapGeometry, r_hat) -> float:
    """Phase difference between emission by atom 1 and atom 2, in ``[0, 2 pi)``."""
    q = momentum_transfer(geom, r_hat)
    return float(np.mod(q.dot(geom.separation), TWO_PI))


def equilibrium_distance(axial_frequency: float, ion_mass: float = CA40_ION_MASS) -> float:
    return (const.e**2 / (2.0 * math.pi * const.epsilon_0 * ion_mass * axial_frequency**2)) ** (1.0 / 3.0)


def equilibrium_separation(geom: TrapGeometry) -> float:
    """Coulomb equilibrium distance of two singly charged ions (m)."""
    return equilibrium_distance(geom.axial_frequency, geom.ion_mass)


@dataclass(frozen=True)
class Mode:
    name: str
    frequency: float
    axis: np.ndarray
    mean_phonons: float


@dataclass(frozen=True)
class ModeSet:
    modes: tuple

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, name):
        for m in self.modes:
            if m.name == name:
                return m
        raise KeyError(name)

    def with_phonons(self, **numbers) -> "ModeSet":
        return ModeSet(tuple(
            Mode(m.name, m.frequency, m.axis, float(numbers.get(m.name, m.mean_phonons)))
            for m in self.modes
        ))


def collective_modes(geom: TrapGeometry) -> ModeSet:
    """Breathing and rocking modes of the linear two-ion crystal."""
    w_ax = geom.axial_frequency
    if geom.radial_frequency_1 <= w_ax or geom.radial_frequency_2 <= w_ax:
        raise DomainError("radial frequencies must exceed the axial frequency for a linear crystal")
    d_hat = _unit(geom.separation, "separation")
    r1 = _unit(geom.rocking_axes[0], "rocking axis")
    r2 = _unit(geom.rocking_axes[1], "rocking axis")
    axes = np.array([d_hat, r1, r2])
    if np.max(np.abs(axes @ axes.T - np.eye(3))) > 1e-9:
        raise DomainError("mode axes must be mutually orthonormal")
    freqs = (
        math.sqrt(3.0) * w_ax,
        math.sqrt(geom.radial_frequency_1**2 - w_ax**2),
        math.sqrt(geom.radial_frequency_2**2 - w_ax**2),
    )
    return ModeSet(tuple(
        Mode(name, f, ax, n)
        for name, f, ax, n in zip(MODE_NAMES, freqs, axes, geom.phonon_numbers)
    ))


def debye_waller(geom: TrapGeometry, modes: ModeSet, r_hat) -> float:
    """Contrast reduction of the two-path interference from thermal motion."""
    q = momentum_transfer(geom, r_hat)
    exponent = 0.0
    for m in modes:
        q_k = q.dot(m.axis)
        exponent += const.hbar * q_k**2 / (geom.ion_mass * m.frequency) * (m.mean_phonons + 0.5)
    return math.exp(-exponent)


def calibrate_laser_angle(target: float = 0.51, **geometry_kwargs) -> float:
    """Laser-detector angle at which the DWF on the detector axis equals ``target``."""

    def f(angle):
        geom = experiment_geometry(laser_angle=angle, **geometry_kwargs)
        return debye_waller(geom, collective_modes(geom), geom.detector_axis) - target

    # the DWF falls monotonically from 1 at zero angle to its minimum at pi/2 here
    hi = math.pi / 2
    if f(hi) > 0:
        raise DomainError(f"target DWF {target} not reachable for angles up to 90 deg")
    return brentq(f, 1e-9, hi, xtol=1e-15, rtol=1e-15)
