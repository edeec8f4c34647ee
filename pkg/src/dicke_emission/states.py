"""Two-atom state algebra in the Dicke basis.

Basis ordering used throughout:

* Dicke basis: ``(|g,g>, |s>, |a>, |e,e>)`` with
  ``|s> = (|e,g> + |g,e>)/sqrt(2)`` and ``|a> = (|e,g> - |g,e>)/sqrt(2)``.
* Product basis: ``(|g,g>, |e,g>, |g,e>, |e,e>)`` where the first label
  belongs to atom 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SQRT_HALF = np.sqrt(0.5)

# rows: Dicke amplitudes, columns: product amplitudes
PRODUCT_TO_DICKE = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, SQRT_HALF, SQRT_HALF, 0.0],
        [0.0, SQRT_HALF, -SQRT_HALF, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ],
    dtype=complex,
)
DICKE_TO_PRODUCT = PRODUCT_TO_DICKE.conj().T

NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TwoAtomState:
    """Pure state of two two-level atoms, stored as Dicke amplitudes.

    The state is an immutable value. Operations that return unnormalized
    vectors (detection, no-jump evolution) use the same type; call
    :meth:`normalized` before interpreting amplitudes as probabilities.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (4,):
            raise DomainError(f"expected 4 amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_product(cls, product_amplitudes) -> "TwoAtomState":
        amps = PRODUCT_TO_DICKE @ np.asarray(product_amplitudes, dtype=complex)
        return cls(amps)

    def to_product(self) -> np.ndarray:
        return DICKE_TO_PRODUCT @ self.amplitudes

    @property
    def c_gg(self) -> complex:
        return complex(self.amplitudes[0])

    @property
    def c_s(self) -> complex:
        return complex(self.amplitudes[1])

    @property
    def c_a(self) -> complex:
        return complex(self.amplitudes[2])

    @property
    def c_ee(self) -> complex:
        return complex(self.amplitudes[3])

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm_squared - 1.0) <= NORM_TOL

    def normalized(self) -> "TwoAtomState":
        n2 = self.norm_squared
        if n2 <= 0.0:
            raise DomainError("cannot normalize a zero vector")
        return TwoAtomState(self.amplitudes / np.sqrt(n2))

    def excited_population(self) -> float:
        """Expectation of ``n1 + n2`` (number of excitations)."""
        p = np.abs(self.amplitudes) ** 2
        return float(p[1] + p[2] + 2.0 * p[3]) / self.norm_squared

    def fidelity(self, other: "TwoAtomState") -> float:
        a = self.normalized().amplitudes
        b = other.normalized().amplitudes
        return float(abs(np.vdot(a, b)) ** 2)

    def __eq__(self, other):
        if not isinstance(other, TwoAtomState):
            return NotImplemented
        return bool(np.array_equal(self.amplitudes, other.amplitudes))

    def __hash__(self):
        return hash(self.amplitudes.tobytes())

    def __repr__(self):
        c = ", ".join(f"{z.real:+.6f}{z.imag:+.6f}j" for z in self.amplitudes)
        return f"TwoAtomState([{c}])"


GROUND = TwoAtomState([1, 0, 0, 0])
SYMMETRIC = TwoAtomState([0, 1, 0, 0])
ANTISYMMETRIC = TwoAtomState([0, 0, 1, 0])
DOUBLY_EXCITED = TwoAtomState([0, 0, 0, 1])


def dicke_from_product(c_gg, c_eg, c_ge, c_ee) -> TwoAtomState:
    """Normalized Dicke-basis state from product-basis amplitudes."""
    vec = np.array([c_gg, c_eg, c_ge, c_ee], dtype=complex)
    n2 = float(np.vdot(vec, vec).real)
    if not np.isfinite(n2) or n2 == 0.0:
        raise DomainError("product amplitudes have zero norm")
    return TwoAtomState.from_product(vec / np.sqrt(n2))


def lowering_operators():
    """Single-atom lowering operators ``sigma_1, sigma_2`` in the product basis."""
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e| with (g, e) ordering
    eye = np.eye(2, dtype=complex)
    # product ordering (gg, eg, ge, ee) == kron(atom2, atom1) with (g, e)
    sigma1 = np.kron(eye, sm)
    sigma2 = np.kron(sm, eye)
    return sigma1, sigma2


def detection_operator(delta: float, basis: str = "dicke") -> np.ndarray:
    """Matrix of ``D(delta) = sigma_1 + exp(i delta) sigma_2``."""
    sigma1, sigma2 = lowering_operators()
    op = sigma1 + np.exp(1j * delta) * sigma2
    if basis == "product":
        return op
    if basis != "dicke":
        raise ValueError(f"unknown basis {basis!r}")
    return PRODUCT_TO_DICKE @ op @ DICKE_TO_PRODUCT


def apply_detection(state: TwoAtomState, delta: float):
    """Apply the detection operator for direction phase ``delta``.

    Returns the unnormalized post-detection state and the weight
    ``<psi|D^dag D|psi>``. The weight may be zero; callers must check
    before renormalizing.
    """
    out = detection_operator(delta) @ state.amplitudes
    weight = float(np.vdot(out, out).real)
    return TwoAtomState(out), weight


def emission_density_coefficients(state: TwoAtomState):
    """Coefficients of ``<D^dag(d) D(d)> = A + B cos d + C sin d``."""
    c_gg, c_eg, c_ge, c_ee = state.to_product()
    a = abs(c_eg) ** 2 + abs(c_ge) ** 2 + 2.0 * abs(c_ee) ** 2
    cross = np.conj(c_eg) * c_ge
    return float(a), float(2.0 * cross.real), float(-2.0 * cross.imag)


def emission_density(state: TwoAtomState, delta):
    """Normalized probability density of the emission phase on ``[0, 2 pi)``."""
    a, b, c = emission_density_coefficients(state)
    if a <= 0.0:
        raise DomainError("state has no excited population")
    delta = np.asarray(delta, dtype=float)
    return (a + b * np.cos(delta) + c * np.sin(delta)) / (2.0 * np.pi * a)
