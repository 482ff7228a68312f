"""
Classical post-processing: reconciliation, verification, privacy amplification.

Every bit of information about the key that goes over the public channel is
published through ``send_classical`` so it shows up on the transcript, and
is counted in the leakage ledger:

    ec-parity   Cascade parities (each bit is one leaked bit)
    ec-shuffle  seeds of the Cascade permutations (key independent)
    vf-seed     Toeplitz seed of the verification hash (key independent)
    vf-tag      Alice's verification tag (t leaked bits)
    vf-result   Bob's accept/reject
    pa-seed     Toeplitz seed for privacy amplification (key independent)

Verification and privacy amplification share one hash family: Toeplitz
matrices over GF(2), which are 2-universal.
"""

import heapq
import math
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.linalg import toeplitz
from scipy.signal import fftconvolve

from bit_utils import as_bits, pack_bits, parity, unpack_bits
from exceptions import DomainError, LengthError, LengthMismatch, SeedLengthError
from random_stream import RandomStream
from sim_channel import Sender, Transcript, send_classical
from sim_config import get_logger

logger = get_logger("postprocessing")

CASCADE_BLOCK_CONSTANT = 0.73
DEFAULT_CASCADE_PASSES = 4
DEFAULT_TAG_BITS = 64

# Above this many matrix entries the hash is computed as a convolution.
DENSE_HASH_LIMIT = 4_000_000


def binary_entropy(q: float) -> float:
    """h(q) = -q log2 q - (1-q) log2(1-q), with h(0) = h(1) = 0"""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"binary entropy is defined on [0, 1], got {q}")
    if q == 0.0 or q == 1.0:
        return 0.0
    return -q * math.log2(q) - (1 - q) * math.log2(1 - q)


@dataclass(frozen=True)
class ToeplitzSeed:
    """First column and row of an out_len x in_len Toeplitz matrix"""

    bits: np.ndarray
    in_len: int
    out_len: int

    def __post_init__(self):
        expected = max(self.in_len + self.out_len - 1, 0)
        if len(self.bits) != expected:
            raise SeedLengthError(
                f"Toeplitz seed for {self.in_len} -> {self.out_len} bits needs {expected} bits, got {len(self.bits)}"
            )

    @classmethod
    def random(cls, in_len: int, out_len: int, rng: RandomStream) -> "ToeplitzSeed":
        return cls(rng.bits(max(in_len + out_len - 1, 0)), in_len, out_len)


def toeplitz_matrix(seed: np.ndarray, in_len: int, out_len: int) -> np.ndarray:
    """T[i, j] = seed[in_len - 1 + i - j], shape (out_len, in_len)"""
    seed = ToeplitzSeed(as_bits(seed), in_len, out_len).bits
    if in_len == 0 or out_len == 0:
        return np.zeros((out_len, in_len), dtype=np.uint8)
    column = seed[in_len - 1:in_len - 1 + out_len]
    row = seed[in_len - 1::-1]
    return toeplitz(column, row).astype(np.uint8)


def toeplitz_hash(data: np.ndarray, seed, out_len: int) -> np.ndarray:
    """
    GF(2) product of the Toeplitz matrix defined by ``seed`` with ``data``.

    Args:
        data: input bit string
        seed: ToeplitzSeed or raw seed bits of length len(data) + out_len - 1
        out_len: number of output bits

    Returns:
        Hash value as a bit string of length out_len
    """
    data = as_bits(data)
    in_len = len(data)
    seed_bits = seed.bits if isinstance(seed, ToeplitzSeed) else as_bits(seed)
    ToeplitzSeed(seed_bits, in_len, out_len)

    if in_len == 0 or out_len == 0:
        return np.zeros(out_len, dtype=np.uint8)
    if in_len * out_len <= DENSE_HASH_LIMIT:
        matrix = toeplitz_matrix(seed_bits, in_len, out_len)
        return ((matrix.astype(np.int64) @ data.astype(np.int64)) % 2).astype(np.uint8)

    # Row i of the product is entry in_len - 1 + i of the full convolution.
    full = fftconvolve(seed_bits.astype(np.float64), data.astype(np.float64))
    window = np.rint(full[in_len - 1:in_len - 1 + out_len]).astype(np.int64)
    return (window % 2).astype(np.uint8)


@dataclass
class ReconciliationReport:
    corrected: np.ndarray
    leak_bits: int
    passes: int
    parities_disclosed: int
    corrections: int = 0


@dataclass
class _PassLayout:
    blocks: List[np.ndarray]
    block_of: np.ndarray
    parities: np.ndarray


class _Cascade:
    """Bob's side of Cascade, asking Alice for parities over the public channel"""

    def __init__(self, alice_bits: np.ndarray, bob_bits: np.ndarray, transcript: Transcript):
        self.alice = alice_bits
        self.bob = bob_bits.copy()
        self.transcript = transcript
        self.layouts: List[_PassLayout] = []
        self.disclosed = 0
        self.corrections = 0

    def _alice_parities(self, blocks: List[np.ndarray]) -> np.ndarray:
        parities = np.array([parity(self.alice[block]) for block in blocks], dtype=np.uint8)
        send_classical(self.transcript, Sender.ALICE, "ec-parity", pack_bits(parities))
        self.disclosed += len(parities)
        return parities

    def run_pass(self, order: np.ndarray, block_size: int) -> None:
        n = len(order)
        blocks = [order[start:start + block_size] for start in range(0, n, block_size)]
        block_of = np.empty(n, dtype=np.int64)
        for index, block in enumerate(blocks):
            block_of[block] = index
        layout = _PassLayout(blocks, block_of, self._alice_parities(blocks))
        self.layouts.append(layout)

        current = len(self.layouts) - 1
        self._resolve([(current, index) for index in range(len(blocks))])

    def _resolve(self, pending: list) -> None:
        heapq.heapify(pending)
        queued = set(pending)
        while pending:
            item = heapq.heappop(pending)
            queued.discard(item)
            pass_index, block_index = item
            layout = self.layouts[pass_index]
            block = layout.blocks[block_index]
            if parity(self.bob[block]) == layout.parities[block_index]:
                continue

            position = self._bisect(block)
            self.bob[position] ^= 1
            self.corrections += 1

            # Every earlier block holding this bit flips parity.
            for other_index, other in enumerate(self.layouts):
                if other_index == pass_index:
                    continue
                reopened = (other_index, int(other.block_of[position]))
                if reopened not in queued:
                    queued.add(reopened)
                    heapq.heappush(pending, reopened)

    def _bisect(self, block: np.ndarray) -> int:
        while len(block) > 1:
            half = (len(block) + 1) // 2
            left = block[:half]
            alice_left = self._alice_parities([left])[0]
            block = left if parity(self.bob[left]) != alice_left else block[half:]
        return int(block[0])


def cascade_block_size(qber_hint: float, length: int) -> int:
    return max(1, math.ceil(CASCADE_BLOCK_CONSTANT / max(qber_hint, 1.0 / length)))


def cascade_reconcile(key_a: np.ndarray, key_b: np.ndarray, qber_hint: float, transcript: Transcript,
                      rng: RandomStream, passes: int = DEFAULT_CASCADE_PASSES) -> ReconciliationReport:
    """
    Cascade error correction of Bob's string towards Alice's.

    Pass 1 uses blocks of ceil(0.73 / max(qber_hint, 1/len)) bits; every
    later pass shuffles positions with a published seed and doubles the
    block size. A parity mismatch is located by bisection, one disclosed
    parity per halving, and a corrected bit re-opens the blocks containing
    it in all other passes.
    """
    alice = as_bits(key_a)
    bob = as_bits(key_b)
    if len(alice) != len(bob):
        raise LengthMismatch(f"cannot reconcile strings of length {len(alice)} and {len(bob)}")
    if not 0.0 <= qber_hint < 0.5:
        raise DomainError(f"qber_hint must be in [0, 0.5), got {qber_hint}")

    n = len(alice)
    if n == 0:
        return ReconciliationReport(bob.copy(), 0, 0, 0, 0)

    cascade = _Cascade(alice, bob, transcript)
    initial_block = cascade_block_size(qber_hint, n)
    for pass_index in range(passes):
        if pass_index == 0:
            order = np.arange(n)
        else:
            shuffle_seed = int(rng.integers(0, 2 ** 63))
            send_classical(transcript, Sender.ALICE, "ec-shuffle", shuffle_seed.to_bytes(8, "big"))
            order = RandomStream(shuffle_seed).permutation(n)
        block_size = min(initial_block * 2 ** pass_index, n)
        cascade.run_pass(order, block_size)
        logger.debug(f"Cascade pass {pass_index + 1}: block {block_size}, "
                     f"{cascade.disclosed} parities so far, {cascade.corrections} corrections")

    return ReconciliationReport(
        corrected=cascade.bob,
        leak_bits=cascade.disclosed,
        passes=passes,
        parities_disclosed=cascade.disclosed,
        corrections=cascade.corrections,
    )


def verify_keys(key_a: np.ndarray, key_b: np.ndarray, tag_bits: int, rng: RandomStream,
                transcript: Transcript) -> bool:
    """
    Compare Toeplitz hashes of both keys under a fresh published seed.

    Equal keys always pass; different keys pass with probability at most
    2**-tag_bits over the seed. Only the tag counts as leakage.
    """
    alice = as_bits(key_a)
    bob = as_bits(key_b)
    if len(alice) != len(bob):
        raise LengthMismatch(f"cannot compare keys of length {len(alice)} and {len(bob)}")

    seed = ToeplitzSeed.random(len(alice), tag_bits, rng)
    send_classical(transcript, Sender.ALICE, "vf-seed", pack_bits(seed.bits))
    tag_a = toeplitz_hash(alice, seed, tag_bits)
    send_classical(transcript, Sender.ALICE, "vf-tag", pack_bits(tag_a))

    published_seed = unpack_bits(transcript.last("vf-seed").payload)
    published_tag = unpack_bits(transcript.last("vf-tag").payload)
    accept = bool(np.array_equal(toeplitz_hash(bob, published_seed, tag_bits), published_tag))
    send_classical(transcript, Sender.BOB, "vf-result", bytes([int(accept)]))
    return accept


def final_length(n: int, qber_upper: float, leak_ec: int, tag_bits: int, eps_sec: float) -> int:
    """
    Secret key length after privacy amplification.

        l = floor(n (1 - h(Q+)) - leak_ec - t - floor(2 log2(1/eps_sec))), clamped at 0

    A finite-key convention of this simulator; Q+ >= 0.5 leaves no key.
    """
    if not 0.0 <= qber_upper <= 1.0:
        raise DomainError(f"qber_upper must be in [0, 1], got {qber_upper}")
    if n < 0 or leak_ec < 0 or tag_bits < 0:
        raise DomainError("lengths and leakage must be non-negative")
    if not 0.0 < eps_sec < 1.0:
        raise DomainError(f"eps_sec must be in (0, 1), got {eps_sec}")
    if qber_upper >= 0.5:
        return 0

    secrecy_cost = math.floor(2 * math.log2(1 / eps_sec))
    length = n * (1 - binary_entropy(qber_upper)) - leak_ec - tag_bits - secrecy_cost
    return max(0, math.floor(length))


def privacy_amplify(key: np.ndarray, length: int, rng: RandomStream, transcript: Transcript) -> np.ndarray:
    """Hash the key down to ``length`` bits with a fresh, published Toeplitz seed"""
    key = as_bits(key)
    if length < 0:
        raise DomainError(f"final length must be non-negative, got {length}")
    if length > len(key):
        raise LengthError(f"cannot extract {length} bits from a {len(key)}-bit key")
    if length == 0:
        return np.zeros(0, dtype=np.uint8)

    seed = ToeplitzSeed.random(len(key), length, rng)
    send_classical(transcript, Sender.ALICE, "pa-seed", pack_bits(seed.bits))
    logger.debug(f"Privacy amplification {len(key)} -> {length} bits, seed of {len(seed.bits)} bits")
    return toeplitz_hash(key, seed, length)


def apply_published_seed(key: np.ndarray, length: int, transcript: Transcript) -> np.ndarray:
    """The peer's half of privacy amplification: reuse the last published seed"""
    key = as_bits(key)
    if length > len(key):
        raise LengthError(f"cannot extract {length} bits from a {len(key)}-bit key")
    if length == 0:
        return np.zeros(0, dtype=np.uint8)
    seed = unpack_bits(transcript.last("pa-seed").payload)
    return toeplitz_hash(key, seed, length)


def leaked_bits_on_transcript(transcript: Transcript) -> int:
    """Parity and tag bits visible on the transcript"""
    return sum(len(unpack_bits(entry.payload)) for entry in transcript
               if entry.tag in ("ec-parity", "vf-tag"))
