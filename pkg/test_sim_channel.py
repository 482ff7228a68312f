import dataclasses

import numpy as np
import pytest
from scipy import stats

from adversary import InterceptResendEve, PassiveEve
from bit_utils import pack_bits, unpack_bits
from exceptions import ConfigError
from qkd_protocol import ProtocolConfig, QKDSession
from quantum_core import X_BASIS, Z_BASIS, Pauli, bell_phi, ket_plus, measure_pair
from random_stream import RandomStream
from sim_channel import NoiseModel, Sender, Transcript, TranscriptEntry, send_classical, transmit_qubit


@pytest.fixture
def rng():
    return RandomStream(99)


def test_noiseless_passive_channel_is_identity(rng):
    result = transmit_qubit(bell_phi(), NoiseModel(), PassiveEve(), rng)
    assert result.delivered
    np.testing.assert_array_equal(result.state.amplitudes, bell_phi().amplitudes)


def test_full_bit_flip_anticorrelates_bell_pair(rng):
    noise = NoiseModel(p_x=1.0)
    for _ in range(200):
        result = transmit_qubit(bell_phi(), noise, PassiveEve(), rng)
        a, b = measure_pair(result.state, Z_BASIS, Z_BASIS, rng)
        assert a != b


def test_phase_flip_only_shows_in_x(rng):
    noise = NoiseModel(p_z=1.0)
    for _ in range(200):
        state = transmit_qubit(bell_phi(), noise, PassiveEve(), rng).state
        a, b = measure_pair(state, Z_BASIS, Z_BASIS, rng)
        assert a == b
        a, b = measure_pair(state, X_BASIS, X_BASIS, rng)
        assert a != b


def test_z_basis_error_rate_is_bit_flip_weight(rng):
    noise = NoiseModel(p_x=0.03, p_y=0.02, p_z=0.04)
    trials = 20_000
    errors = 0
    for _ in range(trials):
        state = transmit_qubit(bell_phi(), noise, PassiveEve(), rng).state
        a, b = measure_pair(state, Z_BASIS, Z_BASIS, rng)
        errors += a != b
    q = noise.p_x + noise.p_y
    assert abs(errors / trials - q) <= 3 * np.sqrt(q * (1 - q) / trials)


def test_full_loss_drops_every_round(rng):
    eve = InterceptResendEve(1.0)
    noise = NoiseModel(p_loss=1.0)
    results = [transmit_qubit(ket_plus(), noise, eve, rng) for _ in range(50)]
    assert not any(result.delivered for result in results)
    # lost rounds are still recorded, so records stay aligned with rounds
    assert len(eve.records) == 50
    assert not any(note.intercepted for note in eve.records)


def test_noise_model_validation():
    with pytest.raises(ConfigError):
        NoiseModel(p_x=1.5)
    with pytest.raises(ConfigError):
        NoiseModel(p_x=0.5, p_y=0.4, p_z=0.3)
    with pytest.raises(ConfigError):
        NoiseModel(p_loss=-0.1)


def test_noise_model_constructors():
    depolarizing = NoiseModel.depolarizing(0.3, p_loss=0.1)
    assert depolarizing.p_x == depolarizing.p_y == depolarizing.p_z == pytest.approx(0.1)
    assert depolarizing.p_loss == 0.1
    assert NoiseModel.bit_flip(0.2).to_dict() == {"p_x": 0.2, "p_y": 0.0, "p_z": 0.0, "p_loss": 0.0}
    assert NoiseModel().is_noiseless


def test_sample_pauli_frequencies(rng):
    noise = NoiseModel(p_x=0.1, p_y=0.2, p_z=0.3)
    draws = [noise.sample_pauli(rng) for _ in range(20_000)]
    counts = [draws.count(p) for p in (Pauli.X, Pauli.Y, Pauli.Z, None)]
    expected = np.array([0.1, 0.2, 0.3, 0.4]) * len(draws)
    assert stats.chisquare(counts, expected).pvalue > 0.001


def test_loss_independent_of_basis_choice():
    config = ProtocolConfig(n_rounds=6000, noise=NoiseModel(p_loss=0.3), seed=5)
    session = QKDSession(config)
    session.run()
    delivered = np.zeros(config.n_rounds, dtype=bool)
    delivered[session.delivered_rounds] = True

    table = np.zeros((2, 2), dtype=int)
    for basis, kept in zip(session.bob.bases, delivered):
        table[basis, int(kept)] += 1
    _, p_value, _, _ = stats.chi2_contingency(table)
    assert p_value > 0.001
    assert abs(delivered.mean() - 0.7) < 0.03


def test_send_classical_appends_unmodified():
    transcript = Transcript()
    bases = np.array([0, 1, 1, 0, 1], dtype=np.uint8)
    returned = send_classical(transcript, Sender.ALICE, "bases-a", pack_bits(bases))
    assert returned is transcript
    assert len(transcript) == 1
    entry = transcript.last("bases-a")
    assert entry.sender is Sender.ALICE
    np.testing.assert_array_equal(unpack_bits(entry.payload), bases)


def test_eve_sees_every_message():
    eve = PassiveEve()
    transcript = Transcript(observers=[eve.observe])
    for i in range(5):
        send_classical(transcript, "Bob", f"tag-{i}", bytes([i]))
    assert len(eve.view) == len(transcript) == 5
    assert eve.view == transcript.entries


def test_transcript_cannot_be_mutated():
    transcript = Transcript()
    send_classical(transcript, Sender.BOB, "lost-rounds", b"")
    entry = transcript[0]
    with pytest.raises(dataclasses.FrozenInstanceError):
        entry.payload = b"forged"
    assert isinstance(transcript.entries, tuple)
    public = {name for name in dir(transcript) if not name.startswith("_")}
    assert not public & {"append", "insert", "remove", "pop", "clear", "extend"}


def test_transcript_jsonl_round_trip(tmp_path):
    transcript = Transcript()
    send_classical(transcript, Sender.ALICE, "pa-seed", pack_bits(np.array([1, 0, 1], dtype=np.uint8)))
    send_classical(transcript, Sender.BOB, "vf-result", b"\x01")

    path = transcript.save(tmp_path / "run" / "transcript.jsonl")
    loaded = Transcript.from_jsonl(path.read_text(encoding="utf-8"))
    assert loaded.entries == transcript.entries
    assert loaded.digest() == transcript.digest()
    assert TranscriptEntry.from_json(transcript[1].to_json()) == transcript[1]


def test_last_missing_tag():
    with pytest.raises(LookupError):
        Transcript().last("pa-seed")
