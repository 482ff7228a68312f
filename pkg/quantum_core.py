"""
Exact small-system quantum states.

States of one to three qubits are dense complex amplitude vectors with
big-endian qubit order (qubit 0 is the most significant index bit). That is
enough for every circuit the simulator needs: single qubits, Bell pairs and
the three-qubit teleportation circuit. Measurements are projective in a real
rotated basis; there is no time evolution and no mixed-state machinery.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, NamedTuple, Tuple, Union

import numpy as np

from exceptions import ArityError, NormalizationError
from random_stream import RandomStream

NORM_TOLERANCE = 1e-9
MAX_QUBITS = 3
SQRT_HALF = 1 / math.sqrt(2)

# Amplitudes are Python/numpy complex numbers.
Complex = complex


class Pauli(Enum):
    X = "X"
    Y = "Y"
    Z = "Z"


PAULI_MATRICES = {
    Pauli.X: np.array([[0, 1], [1, 0]], dtype=np.complex128),
    Pauli.Y: np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    Pauli.Z: np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
IDENTITY = np.eye(2, dtype=np.complex128)


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector of 1-3 qubits; the amplitude array is read-only"""

    amplitudes: np.ndarray
    num_qubits: int = field(init=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).ravel()
        if amps.size not in (2, 4, 8):
            raise ArityError(f"expected 2, 4 or 8 amplitudes (1-{MAX_QUBITS} qubits), got {amps.size}")
        if not np.all(np.isfinite(amps)):
            raise NormalizationError("amplitudes must be finite")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise NormalizationError(f"squared amplitudes sum to {norm:.12f}, expected 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "num_qubits", amps.size.bit_length() - 1)

    def __repr__(self) -> str:
        amps = ", ".join(f"{a:.4g}" for a in self.amplitudes)
        return f"PureState({self.num_qubits}q: [{amps}])"

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def inner(self, other: "PureState") -> complex:
        """<self|other>"""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "PureState") -> float:
        if self.num_qubits != other.num_qubits:
            raise ArityError("fidelity needs states of the same size")
        return abs(self.inner(other)) ** 2

    def equal_up_to_phase(self, other: "PureState", tol: float = 1e-12) -> bool:
        return self.num_qubits == other.num_qubits and abs(1.0 - self.fidelity(other)) <= tol

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(np.kron(self.amplitudes, other.amplitudes))


def _renormalized(vector: np.ndarray) -> PureState:
    return PureState(vector / np.linalg.norm(vector))


@dataclass(frozen=True)
class Basis:
    """
    Real measurement basis at ``angle`` radians, normalized into [0, pi).

    Outcome 0 is cos(angle)|0> + sin(angle)|1>, outcome 1 is
    -sin(angle)|0> + cos(angle)|1>. Angle 0 is Z, pi/4 is X.
    """

    angle: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise ValueError(f"basis angle must be finite, got {self.angle}")
        angle = math.fmod(float(self.angle), math.pi)
        if angle < 0:
            angle += math.pi
        if math.pi - angle < 1e-12:
            angle = 0.0
        object.__setattr__(self, "angle", angle)

    @classmethod
    def z(cls) -> "Basis":
        return cls(0.0)

    @classmethod
    def x(cls) -> "Basis":
        return cls(math.pi / 4)

    @classmethod
    def from_degrees(cls, degrees: float) -> "Basis":
        return cls(math.radians(degrees))

    @classmethod
    def parse(cls, text: str) -> "Basis":
        """'Z', 'X' or an angle in degrees such as '22.5'"""
        name = text.strip().upper()
        if name == "Z":
            return cls.z()
        if name == "X":
            return cls.x()
        try:
            return cls.from_degrees(float(name.rstrip("DEG")))
        except ValueError:
            raise ValueError(f"unknown basis {text!r}")

    @property
    def degrees(self) -> float:
        return math.degrees(self.angle)

    @property
    def label(self) -> str:
        if self.angle == 0.0:
            return "Z"
        if math.isclose(self.angle, math.pi / 4, abs_tol=1e-12):
            return "X"
        return f"{self.degrees:g}deg"

    def matches(self, other: "Basis") -> bool:
        return math.isclose(self.angle, other.angle, abs_tol=1e-12)

    def vectors(self) -> Tuple[np.ndarray, np.ndarray]:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return (np.array([c, s], dtype=np.complex128),
                np.array([-s, c], dtype=np.complex128))

    def eigenstate(self, bit: int) -> PureState:
        return PureState(self.vectors()[bit])


Z_BASIS = Basis.z()
X_BASIS = Basis.x()


@dataclass(frozen=True)
class MeasurementOutcome:
    bit: int
    post_state: PureState


def make_qubit(alpha: Complex, beta: Complex) -> PureState:
    """alpha|0> + beta|1>; raises NormalizationError unless |alpha|^2 + |beta|^2 = 1"""
    return PureState(np.array([alpha, beta], dtype=np.complex128))


def ket0() -> PureState:
    return make_qubit(1, 0)


def ket1() -> PureState:
    return make_qubit(0, 1)


def ket_plus() -> PureState:
    return make_qubit(SQRT_HALF, SQRT_HALF)


def ket_minus() -> PureState:
    return make_qubit(SQRT_HALF, -SQRT_HALF)


def basis_state(index: int, num_qubits: int) -> PureState:
    vector = np.zeros(2 ** num_qubits, dtype=np.complex128)
    vector[index] = 1
    return PureState(vector)


def _check_index(state: PureState, qubit_index: int) -> None:
    if not 0 <= qubit_index < state.num_qubits:
        raise IndexError(f"qubit {qubit_index} out of range for a {state.num_qubits}-qubit state")


def _apply_single(state: PureState, matrix: np.ndarray, qubit_index: int) -> PureState:
    n = state.num_qubits
    tensor = np.moveaxis(state.amplitudes.reshape([2] * n), qubit_index, 0)
    updated = np.tensordot(matrix, tensor, axes=(1, 0))
    return PureState(np.moveaxis(updated, 0, qubit_index).reshape(-1))


def measure(state: PureState, qubit_index: int, basis: Basis, rng: RandomStream) -> MeasurementOutcome:
    """
    Projective measurement of one qubit in ``basis`` (Born rule).

    Args:
        state: state to measure
        qubit_index: which qubit, 0 is the most significant
        basis: measurement basis
        rng: stream supplying exactly one uniform draw

    Returns:
        The sampled bit and the renormalized post-measurement state
    """
    _check_index(state, qubit_index)
    n = state.num_qubits
    tensor = np.moveaxis(state.amplitudes.reshape([2] * n), qubit_index, 0)
    rest_shape = tensor.shape[1:]
    flat = tensor.reshape(2, -1)

    b0, b1 = basis.vectors()
    rest1 = b1.conj() @ flat
    p1 = float(np.vdot(rest1, rest1).real)

    bit = 1 if rng.random() < p1 else 0
    vector = b1 if bit else b0
    rest = rest1 if bit else b0.conj() @ flat

    projected = np.outer(vector, rest).reshape((2,) + rest_shape)
    post = np.moveaxis(projected, 0, qubit_index).reshape(-1)
    return MeasurementOutcome(bit=bit, post_state=_renormalized(post))


_BELL_PHI = PureState(np.array([SQRT_HALF, 0, 0, SQRT_HALF], dtype=np.complex128))


def bell_phi() -> PureState:
    """(|00> + |11>)/sqrt(2)"""
    return _BELL_PHI


def measure_pair(state: PureState, basis_a: Basis, basis_b: Basis, rng: RandomStream) -> Tuple[int, int]:
    """Measure qubit 0 in basis_a, then qubit 1 of the collapsed state in basis_b"""
    if state.num_qubits != 2:
        raise ArityError(f"measure_pair needs a 2-qubit state, got {state.num_qubits}")
    first = measure(state, 0, basis_a, rng)
    second = measure(first.post_state, 1, basis_b, rng)
    return first.bit, second.bit


def apply_pauli(state: PureState, qubit_index: int, which: Union[Pauli, str]) -> PureState:
    _check_index(state, qubit_index)
    pauli = Pauli(which.upper()) if isinstance(which, str) else Pauli(which)
    return _apply_single(state, PAULI_MATRICES[pauli], qubit_index)


def split_product(state: PureState) -> Tuple[PureState, PureState]:
    """Factor a 2-qubit product state into its two halves (up to phase)"""
    if state.num_qubits != 2:
        raise ArityError("split_product needs a 2-qubit state")
    u, s, vh = np.linalg.svd(state.amplitudes.reshape(2, 2))
    if s[1] > 1e-9:
        raise ArityError("state is entangled and has no product decomposition")
    return _renormalized(u[:, 0] * s[0]), _renormalized(vh[0])


# Bell measurement outcomes (x, y): x is the phase bit, y the parity bit.
BELL_BASIS: Dict[Tuple[int, int], np.ndarray] = {
    (0, 0): np.array([1, 0, 0, 1], dtype=np.complex128) * SQRT_HALF,
    (0, 1): np.array([0, 1, 1, 0], dtype=np.complex128) * SQRT_HALF,
    (1, 0): np.array([1, 0, 0, -1], dtype=np.complex128) * SQRT_HALF,
    (1, 1): np.array([0, 1, -1, 0], dtype=np.complex128) * SQRT_HALF,
}

CORRECTIONS: Dict[Tuple[int, int], np.ndarray] = {
    (0, 0): IDENTITY,
    (0, 1): PAULI_MATRICES[Pauli.X],
    (1, 0): PAULI_MATRICES[Pauli.Z],
    (1, 1): PAULI_MATRICES[Pauli.X] @ PAULI_MATRICES[Pauli.Z],
}


class TeleportResult(NamedTuple):
    x: int
    y: int
    received: PureState


def teleport(psi: PureState, rng: RandomStream) -> TeleportResult:
    """
    Teleport a single-qubit state through a shared Bell pair.

    Builds psi (qubit 0) tensor Phi (qubits 1, 2), projects qubits 0-1 onto
    the Bell basis and returns the two classical bits with Bob's qubit as it
    is before any correction.
    """
    if psi.num_qubits != 1:
        raise ArityError("teleport takes a single-qubit state")
    joint = psi.tensor(bell_phi()).amplitudes.reshape(4, 2)

    draw = rng.random()
    cumulative = 0.0
    chosen = None
    for outcome, bell_vector in BELL_BASIS.items():
        bob = bell_vector.conj() @ joint
        weight = float(np.vdot(bob, bob).real)
        if weight <= 0.0:
            continue
        chosen = (outcome, bob)
        cumulative += weight
        if draw < cumulative:
            break

    (x, y), bob = chosen
    return TeleportResult(x, y, _renormalized(bob))


def apply_correction(received: PureState, x: int, y: int) -> PureState:
    """Pauli fix-up: (0,0) I, (0,1) X, (1,0) Z, (1,1) XZ"""
    if received.num_qubits != 1:
        raise ArityError("corrections act on a single qubit")
    return PureState(CORRECTIONS[(int(x), int(y))] @ received.amplitudes)


@dataclass(frozen=True)
class CloningReport:
    alice_basis: Basis
    alice_bit: int
    n_copies: int
    frequencies: Dict[str, Tuple[float, float]]
    inferred_basis: Basis
    error_bound: float

    @property
    def signalled(self) -> bool:
        """True when Bob's copies reveal Alice's basis choice"""
        return self.inferred_basis.matches(self.alice_basis)


def cloning_signaling_demo(n_copies: int, alice_basis: Basis, rng: RandomStream) -> CloningReport:
    """
    Counterfactual: what Bob could learn if cloning were possible.

    Alice measures her half of Phi in ``alice_basis``. Bob's collapsed half is
    known classically inside the simulator, so it is duplicated ``n_copies``
    times; no physical process does this. Half the copies are measured in Z,
    half in X, and the basis with the most certain outcomes is taken as
    Bob's guess of Alice's basis. A majority vote gets it wrong with
    probability at most 2 * 2**(-n_copies/2).
    """
    if n_copies < 2 or n_copies % 2:
        raise ValueError(f"n_copies must be even and >= 2, got {n_copies}")

    alice = measure(bell_phi(), 0, alice_basis, rng)
    _, bob_half = split_product(alice.post_state)

    per_basis = n_copies // 2
    frequencies = {}
    certainty = {}
    for basis in (Z_BASIS, X_BASIS):
        ones = sum(measure(bob_half, 0, basis, rng).bit for _ in range(per_basis))
        pr1 = ones / per_basis
        frequencies[basis.label] = (1.0 - pr1, pr1)
        certainty[basis.label] = abs(pr1 - 0.5)

    inferred = Z_BASIS if certainty["Z"] >= certainty["X"] else X_BASIS
    return CloningReport(
        alice_basis=alice_basis,
        alice_bit=alice.bit,
        n_copies=n_copies,
        frequencies=frequencies,
        inferred_basis=inferred,
        error_bound=2 * 2 ** (-n_copies / 2),
    )
