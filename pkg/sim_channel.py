"""
Simulated quantum and classical channels.

The quantum channel carries the last qubit of a state from the source to
Bob: it may lose the round, hands the qubit to Eve, then applies Pauli noise.
The classical channel is public and authenticated: every message lands on an
append-only ``Transcript`` that Eve can read but never alter.
"""

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

from exceptions import ConfigError
from quantum_core import Pauli, PureState, apply_pauli
from random_stream import RandomStream
from sim_config import get_logger

logger = get_logger("sim_channel")


@dataclass(frozen=True)
class NoiseModel:
    """Pauli channel on the in-transit qubit plus a loss probability"""

    p_x: float = 0.0
    p_y: float = 0.0
    p_z: float = 0.0
    p_loss: float = 0.0

    def __post_init__(self):
        for name in ("p_x", "p_y", "p_z", "p_loss"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.p_x + self.p_y + self.p_z > 1.0 + 1e-12:
            raise ConfigError("p_x + p_y + p_z must not exceed 1")

    @classmethod
    def depolarizing(cls, p: float, p_loss: float = 0.0) -> "NoiseModel":
        return cls(p / 3, p / 3, p / 3, p_loss)

    @classmethod
    def bit_flip(cls, q: float, p_loss: float = 0.0) -> "NoiseModel":
        return cls(p_x=q, p_loss=p_loss)

    @property
    def is_noiseless(self) -> bool:
        return self.p_x == self.p_y == self.p_z == 0.0

    def sample_pauli(self, rng: RandomStream) -> Optional[Pauli]:
        draw = rng.random()
        if draw < self.p_x:
            return Pauli.X
        if draw < self.p_x + self.p_y:
            return Pauli.Y
        if draw < self.p_x + self.p_y + self.p_z:
            return Pauli.Z
        return None

    def to_dict(self) -> dict:
        return {"p_x": self.p_x, "p_y": self.p_y, "p_z": self.p_z, "p_loss": self.p_loss}


@dataclass(frozen=True)
class TransmitResult:
    state: Optional[PureState]

    @property
    def delivered(self) -> bool:
        return self.state is not None


LOST = TransmitResult(None)


def transmit_qubit(state: PureState, noise: NoiseModel, eve, rng: RandomStream) -> TransmitResult:
    """
    Send the last qubit of ``state`` through the quantum channel.

    Loss is decided first and independently of the state; a delivered
    round passes through Eve's hook and then the Pauli noise.
    """
    transit = state.num_qubits - 1
    if noise.p_loss > 0.0 and rng.random() < noise.p_loss:
        eve.note_lost()
        return LOST

    state = eve.on_qubit(state, rng)

    if not noise.is_noiseless:
        pauli = noise.sample_pauli(rng)
        if pauli is not None:
            state = apply_pauli(state, transit, pauli)
    return TransmitResult(state)


class Sender(Enum):
    ALICE = "Alice"
    BOB = "Bob"


@dataclass(frozen=True)
class TranscriptEntry:
    sender: Sender
    tag: str
    payload: bytes

    def to_json(self) -> str:
        return json.dumps({"sender": self.sender.value, "tag": self.tag, "payload": self.payload.hex()})

    @classmethod
    def from_json(cls, line: str) -> "TranscriptEntry":
        data = json.loads(line)
        return cls(Sender(data["sender"]), data["tag"], bytes.fromhex(data["payload"]))


Observer = Callable[[TranscriptEntry], None]


class Transcript:
    """
    Append-only log of the public classical channel.

    Entries are immutable; the only way to add one is ``send_classical``.
    Observers (Eve) are called with every new entry.
    """

    def __init__(self, observers: Sequence[Observer] = ()):
        self._entries: List[TranscriptEntry] = []
        self._observers: Tuple[Observer, ...] = tuple(observers)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[TranscriptEntry]:
        return iter(tuple(self._entries))

    def __getitem__(self, index: int) -> TranscriptEntry:
        return self._entries[index]

    @property
    def entries(self) -> Tuple[TranscriptEntry, ...]:
        return tuple(self._entries)

    def with_tag(self, tag: str) -> List[TranscriptEntry]:
        return [entry for entry in self._entries if entry.tag == tag]

    def last(self, tag: str) -> TranscriptEntry:
        for entry in reversed(self._entries):
            if entry.tag == tag:
                return entry
        raise LookupError(f"no {tag!r} message on the transcript")

    def _append(self, entry: TranscriptEntry) -> None:
        self._entries.append(entry)
        for observer in self._observers:
            observer(entry)

    def to_jsonl(self) -> str:
        return "".join(entry.to_json() + "\n" for entry in self._entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        transcript = cls()
        for line in text.splitlines():
            if line.strip():
                transcript._append(TranscriptEntry.from_json(line))
        return transcript

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        logger.info(f"Transcript with {len(self)} entries written to {path}")
        return path

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()


def send_classical(transcript: Transcript, sender: Union[Sender, str], tag: str, payload: bytes) -> Transcript:
    """Publish a message; it is delivered unmodified and Eve sees a copy"""
    transcript._append(TranscriptEntry(Sender(sender), tag, bytes(payload)))
    return transcript
