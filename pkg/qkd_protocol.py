"""
Entanglement-based QKD protocol and its prepare-and-measure variant.

A session runs the six steps end to end:

    1. distribution   a source emits Bell pairs, one half travels to Bob
    2. measurement    Alice and Bob measure in independently chosen Z/X bases
    3. sifting        bases are announced, mismatched rounds discarded
    4. estimation     a random sample of sifted rounds is announced to bound the QBER
    5. reconciliation Cascade, then a hash comparison of the corrected strings
    6. amplification  Toeplitz hashing down to the secret length

and either returns equal keys with their epsilon accounting or aborts. Alice
and Bob only exchange information through ``send_classical``; the session
object can see both of them because it is the simulator, not a party.
"""

import json
import math
import numbers
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from adversary import PROTOCOL_BASES, EveStrategy, parse_eve
from bit_utils import as_bits, encode_bitstring, pack_bits, pack_indices
from exceptions import ConfigError, InsufficientData, LengthMismatch
from postprocessing import (DEFAULT_CASCADE_PASSES, DEFAULT_TAG_BITS, apply_published_seed,
                            cascade_reconcile, final_length, privacy_amplify, verify_keys)
from quantum_core import Basis, bell_phi, measure, measure_pair
from random_stream import SEED_MASK, RandomStream
from sim_channel import NoiseModel, Sender, Transcript, send_classical, transmit_qubit
from sim_config import env_float, env_int, env_str, get_logger

logger = get_logger("qkd_protocol")

MIN_SIFTED_LENGTH = 16
EPS_GUIDANCE = (1e-12, 1e-6)


@dataclass(frozen=True)
class ProtocolConfig:
    n_rounds: int = 4096
    qber_threshold: float = 0.11
    sample_fraction: float = 0.5
    eps_pe: float = 1e-6
    eps_cor: float = 1e-12
    eps_sec: float = 1e-9
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 20240229
    tag_bits: int = DEFAULT_TAG_BITS
    cascade_passes: int = DEFAULT_CASCADE_PASSES
    eve: str = "passive"

    def __post_init__(self):
        for name in ("n_rounds", "seed", "tag_bits", "cascade_passes"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, numbers.Integral):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in ("qber_threshold", "sample_fraction", "eps_pe", "eps_cor", "eps_sec"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, numbers.Real):
                raise ConfigError(f"{name} must be a number, got {value!r}")
        if not isinstance(self.eve, str):
            raise ConfigError(f"eve must be a string, got {self.eve!r}")
        if self.n_rounds < 1:
            raise ConfigError(f"n_rounds must be positive, got {self.n_rounds}")
        if not 0.0 < self.sample_fraction < 1.0:
            raise ConfigError(f"sample_fraction must be in (0, 1), got {self.sample_fraction}")
        if not 0.0 < self.qber_threshold <= 0.5:
            raise ConfigError(f"qber_threshold must be in (0, 0.5], got {self.qber_threshold}")
        for name in ("eps_pe", "eps_cor", "eps_sec"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {value}")
        if not 0 <= self.seed <= SEED_MASK:
            raise ConfigError(f"seed must be a 64-bit non-negative integer, got {self.seed}")
        if self.tag_bits < 1 or self.cascade_passes < 1:
            raise ConfigError("tag_bits and cascade_passes must be positive")
        if not isinstance(self.noise, NoiseModel):
            raise ConfigError("noise must be a NoiseModel")
        low, high = EPS_GUIDANCE
        if not low <= self.eps_qkd <= high:
            logger.warning(f"eps_qkd = {self.eps_qkd:.3g} is outside the usual {low:g}..{high:g} range")

    @property
    def eps_qkd(self) -> float:
        return self.eps_cor + self.eps_sec

    @property
    def verification_bits(self) -> int:
        """Tag length actually used: long enough that 2**-t <= eps_cor"""
        return max(self.tag_bits, math.ceil(math.log2(1 / self.eps_cor)))

    def replace(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["noise"] = self.noise.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict, base: Optional["ProtocolConfig"] = None) -> "ProtocolConfig":
        """Overlay ``data`` (JSON-shaped) on ``base`` (defaults when omitted)"""
        base = base or cls()
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

        changes = dict(data)
        if "noise" in changes:
            noise = changes["noise"]
            if isinstance(noise, dict):
                extra = set(noise) - {"p_x", "p_y", "p_z", "p_loss"}
                if extra:
                    raise ConfigError(f"unknown noise keys: {', '.join(sorted(extra))}")
                changes["noise"] = replace(base.noise, **{k: float(v) for k, v in noise.items()})
        try:
            return replace(base, **changes)
        except TypeError as e:
            raise ConfigError(f"invalid config: {e}")

    @classmethod
    def from_json_file(cls, path: Union[str, Path], base: Optional["ProtocolConfig"] = None) -> "ProtocolConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data, base)

    @classmethod
    def from_env(cls) -> "ProtocolConfig":
        """Defaults overridden by QKDSIM_* environment variables"""
        defaults = cls()
        noise = NoiseModel(
            p_x=env_float("QKDSIM_PX", 0.0),
            p_y=env_float("QKDSIM_PY", 0.0),
            p_z=env_float("QKDSIM_PZ", 0.0),
            p_loss=env_float("QKDSIM_PLOSS", 0.0),
        )
        return cls(
            n_rounds=env_int("QKDSIM_ROUNDS", defaults.n_rounds),
            qber_threshold=env_float("QKDSIM_QMAX", defaults.qber_threshold),
            sample_fraction=env_float("QKDSIM_SAMPLE_FRACTION", defaults.sample_fraction),
            eps_pe=env_float("QKDSIM_EPS_PE", defaults.eps_pe),
            eps_cor=env_float("QKDSIM_EPS_COR", defaults.eps_cor),
            eps_sec=env_float("QKDSIM_EPS_SEC", defaults.eps_sec),
            noise=noise,
            seed=env_int("QKDSIM_SEED", defaults.seed),
            tag_bits=env_int("QKDSIM_TAG_BITS", defaults.tag_bits),
            eve=env_str("QKDSIM_EVE", defaults.eve),
        )


class KeyStage(Enum):
    RAW = "Raw"
    SIFTED = "Sifted"
    RECONCILED = "Reconciled"
    FINAL = "Final"


_STAGE_ORDER = list(KeyStage)


@dataclass(frozen=True)
class KeyMaterial:
    """A party's key at one pipeline stage with the public leakage about it so far"""

    stage: KeyStage
    bits: np.ndarray
    leak_bits: int = 0

    def __len__(self) -> int:
        return len(self.bits)

    def advance(self, stage: KeyStage, bits: np.ndarray, leak_bits: Optional[int] = None) -> "KeyMaterial":
        leak = self.leak_bits if leak_bits is None else leak_bits
        if _STAGE_ORDER.index(stage) <= _STAGE_ORDER.index(self.stage):
            raise ValueError(f"cannot move key material from {self.stage.value} to {stage.value}")
        if leak < self.leak_bits:
            raise ValueError("leakage can only grow along the pipeline")
        return KeyMaterial(stage, as_bits(bits), leak)


class Outcome(Enum):
    SUCCESS = "Success"
    ABORTED = "Aborted"


class AbortReason(Enum):
    QBER_TOO_HIGH = "QberTooHigh"
    VERIFICATION_FAILED = "VerificationFailed"


@dataclass(frozen=True)
class ParameterEstimate:
    qber_hat: float
    qber_upper: float
    test_positions: np.ndarray
    k: int
    errors: int


@dataclass
class ProtocolStats:
    transcript: Transcript
    rounds: int = 0
    delivered: int = 0
    sifted_len: Optional[int] = None
    sample_size: Optional[int] = None
    qber_estimate: Optional[float] = None
    qber_upper: Optional[float] = None
    remaining_len: Optional[int] = None
    leak_ec: Optional[int] = None
    corrections: Optional[int] = None
    tag_bits: Optional[int] = None
    final_len: Optional[int] = None
    key_stages: List[Tuple[str, int, int]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "transcript"}
        data["key_stages"] = [list(stage) for stage in self.key_stages]
        data["transcript"] = {"entries": len(self.transcript), "sha256": self.transcript.digest()}
        return data


@dataclass
class ProtocolResult:
    outcome: Outcome
    stats: ProtocolStats
    abort_reason: Optional[AbortReason] = None
    s_a: Optional[np.ndarray] = None
    s_b: Optional[np.ndarray] = None
    eps_qkd: Optional[float] = None

    @property
    def succeeded(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    @property
    def aborted(self) -> bool:
        return self.outcome is Outcome.ABORTED

    def to_dict(self) -> Dict:
        return {
            "outcome": self.outcome.value,
            "abort_reason": self.abort_reason.value if self.abort_reason else None,
            "eps_qkd": self.eps_qkd,
            "s_a": encode_bitstring(self.s_a) if self.s_a is not None else None,
            "s_b": encode_bitstring(self.s_b) if self.s_b is not None else None,
            "stats": self.stats.to_dict(),
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


BasisSeq = Union[Sequence[int], Sequence[Basis], Sequence[str], np.ndarray]


def _basis_codes(bases: BasisSeq) -> np.ndarray:
    """0 for Z, 1 for X"""
    codes = []
    for basis in bases:
        if isinstance(basis, str):
            basis = Basis.parse(basis)
        if isinstance(basis, Basis):
            if basis.matches(PROTOCOL_BASES[0]):
                codes.append(0)
            elif basis.matches(PROTOCOL_BASES[1]):
                codes.append(1)
            else:
                raise ValueError(f"protocol rounds use Z or X, got {basis.label}")
        else:
            codes.append(int(basis))
    return np.asarray(codes, dtype=np.uint8)


def sift(alice_bases: BasisSeq, bob_bases: BasisSeq, alice_bits, bob_bits,
         transcript: Transcript) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Announce both basis lists and keep the rounds where they agree.

    Returns:
        (sifted_a, sifted_b, kept_positions)
    """
    a_bases, b_bases = _basis_codes(alice_bases), _basis_codes(bob_bases)
    a_bits, b_bits = as_bits(alice_bits), as_bits(bob_bits)
    if not len(a_bases) == len(b_bases) == len(a_bits) == len(b_bits):
        raise LengthMismatch("basis and bit lists must all have the same length")

    send_classical(transcript, Sender.ALICE, "bases-a", pack_bits(a_bases))
    send_classical(transcript, Sender.BOB, "bases-b", pack_bits(b_bases))

    kept = np.flatnonzero(a_bases == b_bases)
    return a_bits[kept], b_bits[kept], kept


def hoeffding_margin(k: int, eps_pe: float) -> float:
    """sqrt(ln(1/eps_pe) / (2k))"""
    return math.sqrt(math.log(1 / eps_pe) / (2 * k))


def estimate_parameters(sifted_a, sifted_b, sample_fraction: float, eps_pe: float,
                        rng: RandomStream, transcript: Transcript) -> ParameterEstimate:
    """
    Publish a random sample of sifted rounds and bound the error rate.

    The sampled positions are consumed: the caller keys only the rest. The
    upper bound is the sample mean plus a one-sided Hoeffding margin.
    """
    a, b = as_bits(sifted_a), as_bits(sifted_b)
    if len(a) != len(b):
        raise LengthMismatch(f"sifted strings differ in length ({len(a)} vs {len(b)})")
    if len(a) < MIN_SIFTED_LENGTH:
        raise InsufficientData(f"{len(a)} sifted bits, at least {MIN_SIFTED_LENGTH} needed")

    k = math.ceil(sample_fraction * len(a))
    positions = rng.sample_positions(len(a), k)
    send_classical(transcript, Sender.ALICE, "pe-positions", pack_indices(positions))
    send_classical(transcript, Sender.ALICE, "pe-bits-a", pack_bits(a[positions]))
    send_classical(transcript, Sender.BOB, "pe-bits-b", pack_bits(b[positions]))

    errors = int(np.count_nonzero(a[positions] != b[positions]))
    qber_hat = errors / k
    qber_upper = min(1.0, qber_hat + hoeffding_margin(k, eps_pe))
    return ParameterEstimate(qber_hat, qber_upper, positions, k, errors)


class Party:
    """Alice or Bob: private bases, bits and key, plus a private random stream"""

    def __init__(self, name: Sender, rng: RandomStream):
        self.name = name
        self.rng = rng
        self.bases = np.zeros(0, dtype=np.uint8)
        self.bits = np.zeros(0, dtype=np.uint8)
        self.key: Optional[KeyMaterial] = None

    def __repr__(self) -> str:
        return f"Party({self.name.value})"

    def choose_bases(self, n: int) -> np.ndarray:
        self.bases = self.rng.bits(n)
        return self.bases

    def set_key(self, stage: KeyStage, bits: np.ndarray, leak_bits: Optional[int] = None) -> None:
        if self.key is None:
            self.key = KeyMaterial(stage, as_bits(bits), leak_bits or 0)
        else:
            self.key = self.key.advance(stage, bits, leak_bits)


class QKDSession:
    """
    One protocol run.

    Args:
        config: protocol parameters, including the top-level seed
        eve: eavesdropper bound to this session; built from ``config.eve`` when omitted
        variant: "eb" for the entanglement-based protocol, "pm" for prepare-and-measure
    """

    def __init__(self, config: ProtocolConfig, eve: Optional[EveStrategy] = None, variant: str = "eb"):
        if variant not in ("eb", "pm"):
            raise ConfigError(f"variant must be 'eb' or 'pm', got {variant!r}")
        self.config = config
        self.variant = variant
        self.eve = eve if eve is not None else parse_eve(config.eve)

        root = RandomStream(config.seed)
        self.alice = Party(Sender.ALICE, root.spawn("alice"))
        self.bob = Party(Sender.BOB, root.spawn("bob"))
        self.channel_rng = root.spawn("channel")
        self.nature_rng = root.spawn("nature")
        self.public_rng = root.spawn("public")

        self.transcript = Transcript(observers=[self.eve.observe])
        self.stats = ProtocolStats(self.transcript, rounds=config.n_rounds)

        # Simulator-side bookkeeping, never read by the parties.
        self.delivered_rounds = np.zeros(0, dtype=np.int64)
        self.sifted_rounds = np.zeros(0, dtype=np.int64)
        self.sifted_bases = np.zeros(0, dtype=np.uint8)
        self.sifted_alice_bits = np.zeros(0, dtype=np.uint8)

    def _distribute_entangled(self, delivered: np.ndarray) -> None:
        n = self.config.n_rounds
        alice_bits = np.zeros(n, dtype=np.uint8)
        bob_bits = np.zeros(n, dtype=np.uint8)
        for r in range(n):
            basis_a = PROTOCOL_BASES[self.alice.bases[r]]
            basis_b = PROTOCOL_BASES[self.bob.bases[r]]
            result = transmit_qubit(bell_phi(), self.config.noise, self.eve, self.channel_rng)
            if result.delivered:
                alice_bits[r], bob_bits[r] = measure_pair(result.state, basis_a, basis_b, self.nature_rng)
                delivered[r] = True
            else:
                alice_bits[r] = measure(bell_phi(), 0, basis_a, self.nature_rng).bit
        self.alice.bits, self.bob.bits = alice_bits, bob_bits

    def _distribute_prepared(self, delivered: np.ndarray) -> None:
        n = self.config.n_rounds
        self.alice.bits = self.alice.rng.bits(n)
        bob_bits = np.zeros(n, dtype=np.uint8)
        for r in range(n):
            prepared = PROTOCOL_BASES[self.alice.bases[r]].eigenstate(int(self.alice.bits[r]))
            result = transmit_qubit(prepared, self.config.noise, self.eve, self.channel_rng)
            if result.delivered:
                basis_b = PROTOCOL_BASES[self.bob.bases[r]]
                bob_bits[r] = measure(result.state, 0, basis_b, self.nature_rng).bit
                delivered[r] = True
        self.bob.bits = bob_bits

    def _abort(self, reason: AbortReason) -> ProtocolResult:
        logger.warning(f"Protocol aborted: {reason.value}")
        return ProtocolResult(Outcome.ABORTED, self.stats, abort_reason=reason)

    def _record_stage(self, party: Party) -> None:
        self.stats.key_stages.append((party.key.stage.value, len(party.key), party.key.leak_bits))

    def run(self) -> ProtocolResult:
        config = self.config
        stats = self.stats
        n = config.n_rounds

        # Steps 1-2: distribution and measurement
        self.alice.choose_bases(n)
        self.bob.choose_bases(n)
        delivered = np.zeros(n, dtype=bool)
        if self.variant == "eb":
            self._distribute_entangled(delivered)
        else:
            self._distribute_prepared(delivered)

        # Bob announces lost rounds; both drop them before sifting.
        send_classical(self.transcript, Sender.BOB, "lost-rounds", pack_indices(np.flatnonzero(~delivered)))
        self.delivered_rounds = np.flatnonzero(delivered)
        stats.delivered = len(self.delivered_rounds)
        self.alice.set_key(KeyStage.RAW, self.alice.bits[delivered])
        self.bob.set_key(KeyStage.RAW, self.bob.bits[delivered])
        self._record_stage(self.alice)
        logger.info(f"Distributed {n} rounds ({self.variant}), {stats.delivered} delivered")

        # Step 3: sifting
        sifted_a, sifted_b, kept = sift(self.alice.bases[delivered], self.bob.bases[delivered],
                                        self.alice.key.bits, self.bob.key.bits, self.transcript)
        self.sifted_rounds = self.delivered_rounds[kept]
        self.sifted_bases = self.alice.bases[self.sifted_rounds]
        self.sifted_alice_bits = sifted_a
        self.alice.set_key(KeyStage.SIFTED, sifted_a)
        self.bob.set_key(KeyStage.SIFTED, sifted_b)
        self._record_stage(self.alice)
        stats.sifted_len = len(sifted_a)
        logger.info(f"Sifting kept {stats.sifted_len} rounds")

        # Step 4: parameter estimation
        try:
            estimate = estimate_parameters(sifted_a, sifted_b, config.sample_fraction, config.eps_pe,
                                           self.public_rng, self.transcript)
        except InsufficientData as e:
            logger.warning(str(e))
            return self._abort(AbortReason.QBER_TOO_HIGH)

        stats.sample_size = estimate.k
        stats.qber_estimate = estimate.qber_hat
        stats.qber_upper = estimate.qber_upper
        logger.info(f"QBER estimate {estimate.qber_hat:.4f} (upper bound {estimate.qber_upper:.4f}) "
                    f"from {estimate.k} samples")
        if estimate.qber_upper > config.qber_threshold:
            return self._abort(AbortReason.QBER_TOO_HIGH)

        keep = np.ones(len(sifted_a), dtype=bool)
        keep[estimate.test_positions] = False
        remaining_a, remaining_b = sifted_a[keep], sifted_b[keep]
        stats.remaining_len = len(remaining_a)
        if stats.remaining_len == 0:
            logger.warning("Parameter estimation used every sifted bit")
            return self._abort(AbortReason.QBER_TOO_HIGH)

        # Step 5: reconciliation and verification
        report = cascade_reconcile(remaining_a, remaining_b, estimate.qber_hat, self.transcript,
                                   self.public_rng, passes=config.cascade_passes)
        stats.leak_ec = report.leak_bits
        stats.corrections = report.corrections
        self.alice.set_key(KeyStage.RECONCILED, remaining_a, report.leak_bits)
        self.bob.set_key(KeyStage.RECONCILED, report.corrected, report.leak_bits)

        tag_bits = config.verification_bits
        stats.tag_bits = tag_bits
        if not verify_keys(remaining_a, report.corrected, tag_bits, self.public_rng, self.transcript):
            return self._abort(AbortReason.VERIFICATION_FAILED)
        self._record_stage(self.alice)

        # Step 6: privacy amplification
        length = final_length(len(remaining_a), estimate.qber_upper, report.leak_bits, tag_bits, config.eps_sec)
        s_a = privacy_amplify(remaining_a, length, self.public_rng, self.transcript)
        s_b = apply_published_seed(report.corrected, length, self.transcript)
        leak_total = report.leak_bits + tag_bits
        self.alice.set_key(KeyStage.FINAL, s_a, leak_total)
        self.bob.set_key(KeyStage.FINAL, s_b, leak_total)
        self._record_stage(self.alice)
        stats.final_len = length
        logger.info(f"Final key of {length} bits (leak_ec={report.leak_bits}, t={tag_bits})")

        return ProtocolResult(Outcome.SUCCESS, stats, s_a=s_a, s_b=s_b, eps_qkd=config.eps_qkd)


def run_protocol(config: ProtocolConfig, eve: Optional[EveStrategy] = None) -> ProtocolResult:
    """Entanglement-based protocol run"""
    return QKDSession(config, eve, variant="eb").run()


def run_bb84_pm(config: ProtocolConfig, eve: Optional[EveStrategy] = None) -> ProtocolResult:
    """Prepare-and-measure run: Alice sends eigenstates of her basis, the pipeline is unchanged"""
    return QKDSession(config, eve, variant="pm").run()
