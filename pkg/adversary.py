"""
Eavesdropper strategies.

Eve acts on the in-transit qubit (the last qubit of the transmitted state)
and reads every classical message. What she actually learned is kept in
``records``, which only the simulator inspects: protocol parties never see
it.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from exceptions import ConfigError
from quantum_core import X_BASIS, Z_BASIS, Basis, PureState, measure
from random_stream import RandomStream

PROTOCOL_BASES = (Z_BASIS, X_BASIS)


@dataclass(frozen=True)
class RoundNote:
    intercepted: bool
    basis: Optional[Basis] = None
    bit: Optional[int] = None


class EveStrategy:
    """Base strategy: leaves every qubit alone"""

    def __init__(self):
        self.records: List[RoundNote] = []
        self._view: list = []

    def describe(self) -> str:
        return "passive"

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.describe()!r})"

    @property
    def view(self) -> tuple:
        """Every classical message Eve has seen, in order"""
        return tuple(self._view)

    def observe(self, entry) -> None:
        self._view.append(entry)

    def note_lost(self) -> None:
        self.records.append(RoundNote(False))

    def on_qubit(self, state: PureState, rng: RandomStream) -> PureState:
        self.records.append(RoundNote(False))
        return state

    def _intercept(self, state: PureState, basis: Basis, rng: RandomStream) -> PureState:
        # Resending the collapsed eigenstate is the same as letting the collapsed pair continue.
        outcome = measure(state, state.num_qubits - 1, basis, rng)
        self.records.append(RoundNote(True, basis, outcome.bit))
        return outcome.post_state


class PassiveEve(EveStrategy):
    pass


class InterceptResendEve(EveStrategy):
    """
    Measure a fraction of rounds and resend the result.

    Args:
        fraction: probability of intercepting a given round
        basis: fixed measurement basis, or None to pick Z or X at random
    """

    def __init__(self, fraction: float = 1.0, basis: Optional[Basis] = None):
        super().__init__()
        if not 0.0 <= fraction <= 1.0:
            raise ConfigError(f"intercept fraction must be in [0, 1], got {fraction}")
        self.fraction = fraction
        self.basis = basis

    def describe(self) -> str:
        policy = "random" if self.basis is None else self.basis.label.replace("deg", "")
        return f"intercept:{policy}:{self.fraction:g}"

    def on_qubit(self, state: PureState, rng: RandomStream) -> PureState:
        if self.fraction == 0.0 or (self.fraction < 1.0 and rng.random() >= self.fraction):
            self.records.append(RoundNote(False))
            return state
        basis = self.basis if self.basis is not None else PROTOCOL_BASES[rng.bit()]
        return self._intercept(state, basis, rng)


class GuessAllBasesEve(EveStrategy):
    """Measure every round in a basis guessed from Eve's own stream"""

    def __init__(self, seed: int):
        super().__init__()
        self.seed = seed
        self.guess_stream = RandomStream(seed).spawn("eve-guess")

    def describe(self) -> str:
        return f"guessall:{self.seed}"

    def next_guess(self) -> Basis:
        return PROTOCOL_BASES[self.guess_stream.bit()]

    def on_qubit(self, state: PureState, rng: RandomStream) -> PureState:
        return self._intercept(state, self.next_guess(), rng)


def on_qubit(strategy: EveStrategy, state: PureState, rng: RandomStream) -> PureState:
    return strategy.on_qubit(state, rng)


def _as_basis(basis: Union[Basis, int]) -> Basis:
    return basis if isinstance(basis, Basis) else PROTOCOL_BASES[int(basis)]


def eve_knowledge(strategy: EveStrategy, sifted_positions: Sequence[int],
                  alice_bits: Sequence[int], sifted_bases: Sequence[Union[Basis, int]]) -> float:
    """
    Ground-truth fraction of sifted bits Eve knows.

    A bit counts when Eve intercepted that round, in the basis the round was
    sifted in, and her recorded bit equals Alice's.
    """
    positions = np.asarray(sifted_positions, dtype=np.int64)
    if len(positions) == 0:
        return 0.0
    known = 0
    for position, alice_bit, basis in zip(positions, alice_bits, sifted_bases):
        note = strategy.records[position]
        if note.intercepted and note.basis.matches(_as_basis(basis)) and note.bit == int(alice_bit):
            known += 1
    return known / len(positions)


def eve_agreement(strategy: EveStrategy, sifted_positions: Sequence[int], alice_bits: Sequence[int]) -> float:
    """Fraction of sifted rounds where Eve's recorded bit equals Alice's, whatever basis Eve used"""
    positions = np.asarray(sifted_positions, dtype=np.int64)
    if len(positions) == 0:
        return 0.0
    agree = sum(
        1 for position, alice_bit in zip(positions, alice_bits)
        if strategy.records[position].intercepted and strategy.records[position].bit == int(alice_bit)
    )
    return agree / len(positions)


def all_bases_guessed(strategy: EveStrategy, round_bases: Sequence[Union[Basis, int]],
                      positions: Optional[Sequence[int]] = None) -> bool:
    """True when Eve intercepted every listed round in the basis actually used"""
    positions = range(len(round_bases)) if positions is None else positions
    for position, basis in zip(positions, round_bases):
        note = strategy.records[position]
        if not (note.intercepted and note.basis.matches(_as_basis(basis))):
            return False
    return True


def parse_eve(text: str) -> EveStrategy:
    """
    Build a strategy from its config string.

    Examples: "passive", "intercept:random:1.0", "intercept:Z:0.5",
    "intercept:22.5:1", "guessall:7".
    """
    parts = text.strip().split(":")
    kind = parts[0].lower()
    try:
        if kind == "passive" and len(parts) == 1:
            return PassiveEve()
        if kind == "intercept" and 1 <= len(parts) <= 3:
            policy = parts[1] if len(parts) > 1 else "random"
            fraction = float(parts[2]) if len(parts) > 2 else 1.0
            basis = None if policy.lower() == "random" else Basis.parse(policy)
            return InterceptResendEve(fraction=fraction, basis=basis)
        if kind == "guessall" and len(parts) == 2:
            return GuessAllBasesEve(int(parts[1]))
    except ValueError as e:
        raise ConfigError(f"invalid eavesdropper {text!r}: {e}")
    raise ConfigError(f"unknown eavesdropper {text!r}; expected passive, intercept:<policy>:<f> or guessall:<seed>")
