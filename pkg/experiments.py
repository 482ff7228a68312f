"""
Experiment runner behind ``qkdsim sweep`` and the demonstration subcommands.

Every protocol sweep runs ``repetitions`` sessions per grid point and writes
one row per grid point. Repetition seeds are derived from the base seed, the
grid index and the repetition index, so any row can be replayed on its own.
``keylen-vs-eps`` reuses the same repetition seeds at every grid point
(common random numbers), so the only thing that changes along its grid is
epsilon.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from adversary import eve_agreement, eve_knowledge
from bit_utils import bits_to_hex
from exceptions import ConfigError, KeyExhausted
from otp_cipher import KeyLedger, decrypt, encrypt
from qkd_protocol import ProtocolConfig, ProtocolResult, QKDSession
from quantum_core import X_BASIS, Z_BASIS, Basis, apply_correction, cloning_signaling_demo, make_qubit, teleport
from random_stream import RandomStream, derive_seed
from sim_channel import NoiseModel
from sim_config import get_logger

logger = get_logger("experiments")

FLOAT_FORMAT = "%.10g"
MAX_OTP_SESSIONS = 16


class ExperimentKind(Enum):
    QBER_VS_EVE = "qber-vs-eve"
    KEYRATE_VS_NOISE = "keyrate-vs-noise"
    KEYLEN_VS_EPS = "keylen-vs-eps"
    KEYRATE_VS_LOSS = "keyrate-vs-loss"
    DISTURBANCE_VS_ANGLE = "disturbance-vs-angle"
    RUN_ONCE = "run-once"
    TELEPORT_DEMO = "teleport-demo"
    CLONING_DEMO = "cloning-demo"
    OTP_DEMO = "otp-demo"


# Sweep kind -> name of its grid column
SWEEP_PARAMETERS = {
    ExperimentKind.QBER_VS_EVE: "eve_fraction",
    ExperimentKind.KEYRATE_VS_NOISE: "depolarizing_p",
    ExperimentKind.KEYLEN_VS_EPS: "eps_sec",
    ExperimentKind.KEYRATE_VS_LOSS: "p_loss",
    ExperimentKind.DISTURBANCE_VS_ANGLE: "angle_deg",
}
EVE_KINDS = (ExperimentKind.QBER_VS_EVE, ExperimentKind.DISTURBANCE_VS_ANGLE)


@dataclass
class ExperimentSpec:
    """
    What to run.

    ``grid`` holds the swept parameter for protocol sweeps, the seeds for
    run-once, input polar angles in degrees for teleport-demo, copy counts
    for cloning-demo and message lengths in bits for otp-demo.
    ``repetitions`` is sessions per point for sweeps and trials per point for
    the demos.
    """

    kind: Union[ExperimentKind, str]
    grid: List[float]
    repetitions: int = 1
    base_config: ProtocolConfig = field(default_factory=ProtocolConfig)
    workers: int = 1
    variant: str = "eb"
    common_seeds: Optional[bool] = None
    options: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.kind, ExperimentKind):
            try:
                self.kind = ExperimentKind(self.kind)
            except ValueError:
                kinds = ", ".join(k.value for k in ExperimentKind)
                raise ConfigError(f"unknown experiment kind {self.kind!r}; choose one of {kinds}")
        self.grid = list(self.grid)
        if not self.grid:
            raise ConfigError("experiment grid must not be empty")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.variant not in ("eb", "pm"):
            raise ConfigError(f"variant must be 'eb' or 'pm', got {self.variant!r}")
        if self.common_seeds is None:
            self.common_seeds = self.kind is ExperimentKind.KEYLEN_VS_EPS

    @property
    def is_sweep(self) -> bool:
        return self.kind in SWEEP_PARAMETERS


@dataclass(frozen=True)
class PointTask:
    """One grid point of a protocol sweep, self-contained so it can cross a process boundary"""

    kind: ExperimentKind
    grid_index: int
    value: float
    config: ProtocolConfig
    seeds: tuple
    variant: str
    base_seed: int


def repetition_seeds(base_seed: int, grid_index: int, repetitions: int, common: bool) -> tuple:
    if common:
        return tuple(derive_seed(base_seed, rep) for rep in range(repetitions))
    return tuple(derive_seed(base_seed, grid_index, rep) for rep in range(repetitions))


def configure_point(kind: ExperimentKind, base: ProtocolConfig, value: float) -> ProtocolConfig:
    """Base config with the swept parameter set to ``value``"""
    if kind is ExperimentKind.QBER_VS_EVE:
        return base.replace(eve=f"intercept:random:{value!r}")
    if kind is ExperimentKind.KEYRATE_VS_NOISE:
        return base.replace(noise=NoiseModel.depolarizing(value, p_loss=base.noise.p_loss))
    if kind is ExperimentKind.KEYLEN_VS_EPS:
        return base.replace(eps_sec=value)
    if kind is ExperimentKind.KEYRATE_VS_LOSS:
        return base.replace(noise=replace(base.noise, p_loss=value))
    if kind is ExperimentKind.DISTURBANCE_VS_ANGLE:
        return base.replace(eve=f"intercept:{value!r}:1")
    raise ConfigError(f"{kind.value} is not a protocol sweep")


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def _std(values: Sequence[float]) -> float:
    return float(np.std(values)) if len(values) else math.nan


def run_point(task: PointTask) -> Dict[str, object]:
    """Run every repetition of one grid point and summarize it as a row"""
    qbers, leaks, final_lens, knowledge, agreement = [], [], [], [], []
    aborts = 0
    for seed in task.seeds:
        session = QKDSession(task.config.replace(seed=seed), variant=task.variant)
        result = session.run()
        stats = result.stats
        if stats.qber_estimate is not None:
            qbers.append(stats.qber_estimate)
        if stats.leak_ec is not None:
            leaks.append(stats.leak_ec)
        final_lens.append(stats.final_len if result.succeeded else 0)
        aborts += int(result.aborted)
        if task.kind in EVE_KINDS:
            knowledge.append(eve_knowledge(session.eve, session.sifted_rounds,
                                           session.sifted_alice_bits, session.sifted_bases))
            agreement.append(eve_agreement(session.eve, session.sifted_rounds, session.sifted_alice_bits))

    row = {
        SWEEP_PARAMETERS[task.kind]: task.value,
        "base_seed": task.base_seed,
        "grid_index": task.grid_index,
        "repetitions": len(task.seeds),
        "qber_mean": _mean(qbers),
        "qber_std": _std(qbers),
        "abort_rate": aborts / len(task.seeds),
        "final_len_mean": _mean(final_lens),
        "leak_mean": _mean(leaks),
        "eps_qkd": task.config.eps_qkd,
        "key_rate": _mean(final_lens) / task.config.n_rounds,
    }
    if task.kind in EVE_KINDS:
        row["eve_knowledge_mean"] = _mean(knowledge)
        row["eve_agreement_mean"] = _mean(agreement)
    return row


def run_sweep(spec: ExperimentSpec) -> pd.DataFrame:
    base_seed = spec.base_config.seed
    tasks = [
        PointTask(
            kind=spec.kind,
            grid_index=index,
            value=float(value),
            config=configure_point(spec.kind, spec.base_config, float(value)),
            seeds=repetition_seeds(base_seed, index, spec.repetitions, spec.common_seeds),
            variant=spec.variant,
            base_seed=base_seed,
        )
        for index, value in enumerate(spec.grid)
    ]
    logger.info(f"Sweep {spec.kind.value}: {len(tasks)} grid points x {spec.repetitions} repetitions, "
                f"{spec.workers} worker(s)")

    if spec.workers == 1:
        rows = []
        for task in tasks:
            rows.append(run_point(task))
            logger.info(f"Grid point {task.grid_index + 1}/{len(tasks)} done")
    else:
        # map() yields in submission order, so rows stay ordered by grid index.
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(run_point, tasks))
    return pd.DataFrame(rows)


def run_once(config: ProtocolConfig, variant: str = "eb") -> ProtocolResult:
    return QKDSession(config, variant=variant).run()


def _run_once_table(spec: ExperimentSpec) -> pd.DataFrame:
    rows = []
    for index, seed in enumerate(spec.grid):
        result = run_once(spec.base_config.replace(seed=int(seed)), spec.variant)
        stats = result.stats
        rows.append({
            "seed": int(seed),
            "grid_index": index,
            "outcome": result.outcome.value,
            "abort_reason": result.abort_reason.value if result.abort_reason else "",
            "sifted_len": stats.sifted_len,
            "qber_estimate": stats.qber_estimate,
            "qber_upper": stats.qber_upper,
            "leak_ec": stats.leak_ec,
            "final_len": stats.final_len if result.succeeded else 0,
            "eps_qkd": spec.base_config.eps_qkd,
            "transcript_sha256": stats.transcript.digest(),
        })
    return pd.DataFrame(rows)


def teleport_demo(trials: int, rng: RandomStream, theta_deg: Optional[float] = None) -> pd.DataFrame:
    """
    Teleport ``trials`` states cos(t/2)|0> + e^(i phi) sin(t/2)|1> and report
    each outcome with the fidelity before and after Bob's correction.

    ``theta_deg`` fixes the polar angle t; otherwise it is drawn per trial.
    The phase phi is always drawn.
    """
    rows = []
    for trial in range(trials):
        theta = math.radians(theta_deg) if theta_deg is not None else math.pi * rng.random()
        phi = 2 * math.pi * rng.random()
        psi = make_qubit(math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2))
        outcome = teleport(psi, rng)
        corrected = apply_correction(outcome.received, outcome.x, outcome.y)
        rows.append({
            "trial": trial,
            "x": outcome.x,
            "y": outcome.y,
            "fidelity": psi.fidelity(corrected),
            "fidelity_uncorrected": psi.fidelity(outcome.received),
        })
    return pd.DataFrame(rows)


def _teleport_table(spec: ExperimentSpec) -> pd.DataFrame:
    rows = []
    for index, theta in enumerate(spec.grid):
        rng = RandomStream(derive_seed(spec.base_config.seed, index))
        trials = teleport_demo(spec.repetitions, rng, float(theta))
        counts = trials.groupby(["x", "y"]).size()
        row = {
            "theta_deg": float(theta),
            "base_seed": spec.base_config.seed,
            "grid_index": index,
            "trials": spec.repetitions,
            "fidelity_mean": trials["fidelity"].mean(),
            "fidelity_min": trials["fidelity"].min(),
            "fidelity_uncorrected_mean": trials["fidelity_uncorrected"].mean(),
        }
        for x in (0, 1):
            for y in (0, 1):
                row[f"p{x}{y}"] = counts.get((x, y), 0) / spec.repetitions
        rows.append(row)
    return pd.DataFrame(rows)


def cloning_demo(copies: int, trials: int, rng: RandomStream, alice_basis: Optional[Basis] = None) -> pd.DataFrame:
    """
    Repeat the cloning counterfactual. Without a fixed ``alice_basis`` Alice
    picks Z or X at random each trial, which is the choice Bob tries to read.
    """
    rows = []
    for trial in range(trials):
        basis = alice_basis if alice_basis is not None else (Z_BASIS, X_BASIS)[rng.bit()]
        report = cloning_signaling_demo(copies, basis, rng)
        rows.append({
            "trial": trial,
            "alice_basis": report.alice_basis.label,
            "alice_bit": report.alice_bit,
            "inferred_basis": report.inferred_basis.label,
            "signalled": report.signalled,
            "z_pr0": report.frequencies["Z"][0],
            "z_pr1": report.frequencies["Z"][1],
            "x_pr0": report.frequencies["X"][0],
            "x_pr1": report.frequencies["X"][1],
            "error_bound": report.error_bound,
        })
    return pd.DataFrame(rows)


def _cloning_table(spec: ExperimentSpec) -> pd.DataFrame:
    basis = spec.options.get("basis")
    alice_basis = Basis.parse(str(basis)) if basis else None
    rows = []
    for index, copies in enumerate(spec.grid):
        rng = RandomStream(derive_seed(spec.base_config.seed, index))
        trials = cloning_demo(int(copies), spec.repetitions, rng, alice_basis)
        rows.append({
            "copies": int(copies),
            "base_seed": spec.base_config.seed,
            "grid_index": index,
            "alice_basis": alice_basis.label if alice_basis else "random",
            "trials": spec.repetitions,
            "signal_rate": trials["signalled"].mean(),
            "error_bound": trials["error_bound"].iloc[0],
        })
    return pd.DataFrame(rows)


@dataclass
class OtpDemoResult:
    message_hex: str
    ciphertext_hex: str
    decrypted_hex: str
    message_bits: int
    qkd_sessions: int
    key_bits: int
    alice_ledger: KeyLedger
    bob_ledger: KeyLedger

    @property
    def roundtrip_ok(self) -> bool:
        return self.decrypted_hex == self.message_hex

    def to_dict(self) -> Dict[str, object]:
        return {
            "message_hex": self.message_hex,
            "ciphertext_hex": self.ciphertext_hex,
            "decrypted_hex": self.decrypted_hex,
            "message_bits": self.message_bits,
            "qkd_sessions": self.qkd_sessions,
            "key_bits": self.key_bits,
            "key_bits_consumed": self.alice_ledger.consumed,
            "roundtrip_ok": self.roundtrip_ok,
        }


def top_up(alice: KeyLedger, bob: KeyLedger, needed: int, config: ProtocolConfig, variant: str = "eb") -> int:
    """
    Run QKD sessions until both ledgers hold ``needed`` unused bits.

    Returns the number of sessions run. Aborted sessions add nothing. Session
    seeds include the ledger length, so a ledger never receives the output of
    the same session twice.
    """
    sessions = 0
    while alice.remaining < needed:
        if sessions >= MAX_OTP_SESSIONS:
            raise KeyExhausted(f"{MAX_OTP_SESSIONS} QKD sessions left the ledger {needed - alice.remaining} "
                               f"bits short")
        seed = derive_seed(config.seed, "otp", len(alice.key), sessions)
        result = run_once(config.replace(seed=seed), variant)
        sessions += 1
        if result.succeeded:
            alice.extend(result.s_a)
            bob.extend(result.s_b)
            logger.info(f"QKD session added {len(result.s_a)} key bits")
        else:
            logger.warning(f"QKD session aborted ({result.abort_reason.value}), running again")
    return sessions


def otp_demo(message_bits, config: ProtocolConfig, alice: Optional[KeyLedger] = None,
             bob: Optional[KeyLedger] = None, variant: str = "eb") -> OtpDemoResult:
    """Encrypt with Alice's ledger and decrypt with Bob's, running QKD whenever key runs out"""
    alice = alice if alice is not None else KeyLedger()
    bob = bob if bob is not None else KeyLedger()
    sessions = top_up(alice, bob, len(message_bits), config, variant=variant)
    ciphertext, _ = encrypt(alice, message_bits)
    decrypted, _ = decrypt(bob, ciphertext)
    return OtpDemoResult(
        message_hex=bits_to_hex(message_bits),
        ciphertext_hex=bits_to_hex(ciphertext),
        decrypted_hex=bits_to_hex(decrypted),
        message_bits=len(message_bits),
        qkd_sessions=sessions,
        key_bits=len(alice.key),
        alice_ledger=alice,
        bob_ledger=bob,
    )


def _otp_table(spec: ExperimentSpec) -> pd.DataFrame:
    rows = []
    for index, length in enumerate(spec.grid):
        rng = RandomStream(derive_seed(spec.base_config.seed, index))
        config = spec.base_config.replace(seed=derive_seed(spec.base_config.seed, index))
        alice, bob = KeyLedger(), KeyLedger()
        sessions, ok = 0, True
        for _ in range(spec.repetitions):
            message = rng.bits(int(length))
            sessions += top_up(alice, bob, len(message), config, variant=spec.variant)
            ciphertext, _ = encrypt(alice, message)
            decrypted, _ = decrypt(bob, ciphertext)
            ok = ok and bool(np.array_equal(decrypted, message))
        rows.append({
            "message_bits": int(length),
            "base_seed": spec.base_config.seed,
            "grid_index": index,
            "messages": spec.repetitions,
            "qkd_sessions": sessions,
            "key_bits": len(alice.key),
            "key_bits_consumed": alice.consumed,
            "roundtrip_ok": ok,
        })
    return pd.DataFrame(rows)


def run_experiment(spec: ExperimentSpec) -> pd.DataFrame:
    """One row per grid point; see ``ExperimentSpec`` for what the grid means per kind"""
    if spec.is_sweep:
        return run_sweep(spec)
    builders = {
        ExperimentKind.RUN_ONCE: _run_once_table,
        ExperimentKind.TELEPORT_DEMO: _teleport_table,
        ExperimentKind.CLONING_DEMO: _cloning_table,
        ExperimentKind.OTP_DEMO: _otp_table,
    }
    return builders[spec.kind](spec)


def write_table(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Deterministic CSV: fixed float format and newline"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(table)} rows to {path}")
    return path
