import itertools
import math

import numpy as np
import pytest

import postprocessing
from bit_utils import unpack_bits, xor_bits
from exceptions import DomainError, LengthError, LengthMismatch, SeedLengthError
from postprocessing import (ToeplitzSeed, apply_published_seed, binary_entropy, cascade_block_size,
                            cascade_reconcile, final_length, leaked_bits_on_transcript, privacy_amplify,
                            toeplitz_hash, toeplitz_matrix, verify_keys)
from random_stream import RandomStream
from sim_channel import Sender, Transcript


@pytest.fixture
def rng():
    return RandomStream(2024)


def noisy_copy(bits, error_rate, rng):
    flips = (rng.uniform(len(bits)) < error_rate).astype(np.uint8)
    return xor_bits(bits, flips)


def test_binary_entropy():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-4)
    with pytest.raises(DomainError):
        binary_entropy(1.5)


def test_toeplitz_matrix_is_diagonal_constant(rng):
    in_len, out_len = 7, 4
    seed = rng.bits(in_len + out_len - 1)
    matrix = toeplitz_matrix(seed, in_len, out_len)
    assert matrix.shape == (out_len, in_len)
    for i in range(out_len):
        for j in range(in_len):
            assert matrix[i, j] == seed[in_len - 1 + i - j]


def test_toeplitz_seed_length_is_checked(rng):
    with pytest.raises(SeedLengthError):
        ToeplitzSeed(rng.bits(5), 4, 4)
    with pytest.raises(SeedLengthError):
        toeplitz_hash(rng.bits(8), rng.bits(3), 4)


def test_toeplitz_hash_linear(rng):
    a, b = rng.bits(100), rng.bits(100)
    seed = ToeplitzSeed.random(100, 20, rng)
    assert not toeplitz_hash(np.zeros(100, dtype=np.uint8), seed, 20).any()
    np.testing.assert_array_equal(
        xor_bits(toeplitz_hash(a, seed, 20), toeplitz_hash(b, seed, 20)),
        toeplitz_hash(xor_bits(a, b), seed, 20),
    )


def test_convolution_path_matches_dense_product(rng, monkeypatch):
    data = rng.bits(3000)
    seed = ToeplitzSeed.random(3000, 900, rng)
    dense = toeplitz_hash(data, seed, 900)
    monkeypatch.setattr(postprocessing, "DENSE_HASH_LIMIT", 0)
    np.testing.assert_array_equal(toeplitz_hash(data, seed, 900), dense)


def collision_counts(in_len, out_len):
    """Collisions over every seed for every pair of inputs, as a matrix"""
    n_seed = in_len + out_len - 1
    inputs = np.array(list(itertools.product([0, 1], repeat=in_len)), dtype=np.int64)
    weights = 1 << np.arange(out_len)
    codes = []
    for seed in itertools.product([0, 1], repeat=n_seed):
        matrix = toeplitz_matrix(np.array(seed, dtype=np.uint8), in_len, out_len).astype(np.int64)
        hashes = (inputs @ matrix.T) % 2
        codes.append(hashes @ weights)
    codes = np.array(codes)
    return (codes[:, :, None] == codes[:, None, :]).sum(axis=0), len(codes)


def test_two_universal_small_example():
    counts, n_seeds = collision_counts(4, 2)
    assert n_seeds == 32
    off_diagonal = counts[~np.eye(len(counts), dtype=bool)]
    assert off_diagonal.max() <= 8


@pytest.mark.parametrize("in_len", range(1, 7))
@pytest.mark.parametrize("out_len", range(1, 4))
def test_two_universal_exhaustive(in_len, out_len):
    counts, n_seeds = collision_counts(in_len, out_len)
    off_diagonal = counts[~np.eye(len(counts), dtype=bool)]
    assert off_diagonal.max() <= n_seeds * 2 ** -out_len


def test_verify_equal_keys_accepts(rng):
    key = rng.bits(500)
    for tag_bits in (1, 16, 64):
        transcript = Transcript()
        assert verify_keys(key, key.copy(), tag_bits, rng, transcript)
        assert [entry.tag for entry in transcript] == ["vf-seed", "vf-tag", "vf-result"]
        assert len(unpack_bits(transcript.last("vf-tag").payload)) == tag_bits
        assert leaked_bits_on_transcript(transcript) == tag_bits


def test_verify_rejects_unequal_keys_mostly(rng):
    key_a = rng.bits(64)
    key_b = key_a.copy()
    key_b[17] ^= 1
    trials, tag_bits = 4000, 6
    accepted = sum(verify_keys(key_a, key_b, tag_bits, rng, Transcript()) for _ in range(trials))
    p = 2 ** -tag_bits
    assert accepted <= trials * p + 3 * math.sqrt(trials * p * (1 - p))


def test_verify_publishes_only_alices_tag_and_a_verdict(rng):
    key_a = rng.bits(200)
    key_b = key_a.copy()
    key_b[:100] ^= 1
    transcript = Transcript()
    assert not verify_keys(key_a, key_b, 64, rng, transcript)
    assert [(entry.sender, entry.tag) for entry in transcript] == [
        (Sender.ALICE, "vf-seed"), (Sender.ALICE, "vf-tag"), (Sender.BOB, "vf-result")]
    assert transcript.last("vf-result").payload == b"\x00"
    assert leaked_bits_on_transcript(transcript) == 64


def test_verify_length_mismatch(rng):
    with pytest.raises(LengthMismatch):
        verify_keys(rng.bits(10), rng.bits(11), 8, rng, Transcript())


@pytest.mark.slow
def test_verification_guarantee_acceptance():
    # A one-bit difference at position j is missed exactly when column j of the
    # Toeplitz matrix is zero; column j is the seed window starting at in_len - 1 - j.
    rng = RandomStream(7)
    in_len, tag_bits, trials, position = 48, 16, 1_000_000, 20
    seeds = np.random.Generator(np.random.Philox(7)).integers(0, 2, size=(trials, in_len + tag_bits - 1),
                                                               dtype=np.uint8)
    start = in_len - 1 - position
    missed = ~seeds[:, start:start + tag_bits].any(axis=1)

    key_a = rng.bits(in_len)
    key_b = key_a.copy()
    key_b[position] ^= 1
    for row in range(300):
        same = np.array_equal(toeplitz_hash(key_a, seeds[row], tag_bits), toeplitz_hash(key_b, seeds[row], tag_bits))
        assert same == missed[row]

    p = 2 ** -tag_bits
    assert missed.mean() <= p + 3 * math.sqrt(p * (1 - p) / trials)


def test_final_length_worked_example():
    assert final_length(10_000, 0.0, 0, 64, 1e-6) == 9897


def test_final_length_no_key_cases():
    assert final_length(10_000, 0.5, 0, 64, 1e-6) == 0
    assert final_length(10_000, 0.7, 0, 64, 1e-6) == 0
    assert final_length(100, 0.05, 60, 64, 1e-9) == 0


def test_final_length_decreases_with_eps_sec():
    lengths = [final_length(10_000, 0.03, 1500, 64, eps) for eps in (1e-6, 1e-9, 1e-12)]
    assert lengths[0] > lengths[1] > lengths[2] > 0


def test_final_length_domain():
    with pytest.raises(DomainError):
        final_length(100, 1.2, 0, 64, 1e-9)
    with pytest.raises(DomainError):
        final_length(100, -0.1, 0, 64, 1e-9)
    with pytest.raises(DomainError):
        final_length(100, 0.1, -1, 64, 1e-9)


def test_cascade_identical_strings(rng):
    key = rng.bits(256)
    transcript = Transcript()
    report = cascade_reconcile(key, key.copy(), 0.01, transcript, rng, passes=4)
    np.testing.assert_array_equal(report.corrected, key)
    assert report.corrections == 0

    first = cascade_block_size(0.01, 256)
    top_level = sum(math.ceil(256 / min(first * 2 ** p, 256)) for p in range(4))
    assert report.leak_bits == top_level
    assert leaked_bits_on_transcript(transcript) == top_level
    assert len(transcript.with_tag("ec-shuffle")) == 3


def test_cascade_single_error(rng):
    key_a = rng.bits(256)
    key_b = key_a.copy()
    key_b[101] ^= 1
    report = cascade_reconcile(key_a, key_b, 0.01, Transcript(), rng, passes=2)
    np.testing.assert_array_equal(report.corrected, key_a)
    assert report.corrections == 1

    first = cascade_block_size(0.01, 256)
    blocks = math.ceil(256 / first) + math.ceil(256 / min(2 * first, 256))
    assert report.leak_bits <= blocks + 2 * math.log2(256)


def test_cascade_two_percent_errors(rng):
    residual = []
    for seed in range(10):
        local = RandomStream(seed)
        key_a = local.bits(4096)
        key_b = noisy_copy(key_a, 0.02, local)
        report = cascade_reconcile(key_a, key_b, 0.02, Transcript(), local)
        residual.append(np.mean(report.corrected != key_a))
        assert report.leak_bits > 0
    assert np.mean(residual) < 1e-3


@pytest.mark.slow
def test_cascade_then_verify_acceptance():
    for seed in range(1000):
        local = RandomStream(seed)
        key_a = local.bits(4096)
        key_b = noisy_copy(key_a, 0.02, local)
        transcript = Transcript()
        report = cascade_reconcile(key_a, key_b, 0.02, transcript, local)
        if verify_keys(key_a, report.corrected, 64, local, transcript):
            np.testing.assert_array_equal(report.corrected, key_a)


def test_cascade_input_checks(rng):
    with pytest.raises(LengthMismatch):
        cascade_reconcile(rng.bits(10), rng.bits(12), 0.01, Transcript(), rng)
    with pytest.raises(DomainError):
        cascade_reconcile(rng.bits(10), rng.bits(10), 0.5, Transcript(), rng)


def test_privacy_amplify_zero_length(rng):
    transcript = Transcript()
    assert len(privacy_amplify(rng.bits(100), 0, rng, transcript)) == 0
    assert len(transcript) == 0


def test_privacy_amplify_peer_uses_published_seed(rng):
    key = rng.bits(400)
    transcript = Transcript()
    s_a = privacy_amplify(key, 150, rng, transcript)
    s_b = apply_published_seed(key.copy(), 150, transcript)
    assert len(s_a) == 150
    np.testing.assert_array_equal(s_a, s_b)
    assert len(unpack_bits(transcript.last("pa-seed").payload)) == 400 + 150 - 1


def test_privacy_amplify_length_checks(rng):
    with pytest.raises(LengthError):
        privacy_amplify(rng.bits(10), 11, rng, Transcript())
    with pytest.raises(DomainError):
        privacy_amplify(rng.bits(10), -1, rng, Transcript())


def output_bias(trials, seed):
    # 16 of 64 key bits are fixed and known to Eve; the rest are uniform.
    rng = RandomStream(seed)
    known = rng.bits(16)
    length = 64 - 16 - 16
    ones = np.zeros(length)
    for _ in range(trials):
        key = np.concatenate([known, rng.bits(48)])
        ones += privacy_amplify(key, length, rng, Transcript())
    return ones / trials


def test_privacy_amplify_output_unbiased():
    trials = 4000
    bias = np.abs(output_bias(trials, 8) - 0.5)
    assert bias.max() <= 4 * math.sqrt(0.25 / trials)


@pytest.mark.slow
def test_privacy_amplify_bias_acceptance():
    trials = 100_000
    bias = np.abs(output_bias(trials, 9) - 0.5)
    assert bias.max() <= 4 * math.sqrt(0.25 / trials)
