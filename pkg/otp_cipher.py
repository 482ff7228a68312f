"""
One-time pad over QKD key material.

The ledger hands out each key bit exactly once. Alice and Bob keep one
ledger each over the same key and consume it in lockstep.
"""

from typing import Tuple

import numpy as np

from bit_utils import as_bits, bits_to_hex, hex_to_bits, xor_bits
from exceptions import KeyExhausted
from sim_config import get_logger

logger = get_logger("otp_cipher")

LOW_KEY_WARNING = 64


class KeyLedger:
    """Key bits plus the offset of the first unused bit. ``consumed`` only moves forward."""

    def __init__(self, key=None, consumed: int = 0):
        self._key = as_bits(key if key is not None else [])
        if not 0 <= consumed <= len(self._key):
            raise ValueError(f"consumed offset {consumed} outside key of length {len(self._key)}")
        self._consumed = int(consumed)

    def __repr__(self) -> str:
        return f"KeyLedger(consumed={self._consumed}, remaining={self.remaining})"

    @property
    def key(self) -> np.ndarray:
        view = self._key.view()
        view.flags.writeable = False
        return view

    @property
    def consumed(self) -> int:
        return self._consumed

    @property
    def remaining(self) -> int:
        return len(self._key) - self._consumed

    def extend(self, bits) -> "KeyLedger":
        """Append freshly distributed key"""
        self._key = np.concatenate([self._key, as_bits(bits)])
        return self

    def take(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("cannot take a negative number of key bits")
        if n > self.remaining:
            raise KeyExhausted(f"{n} key bits requested, {self.remaining} left; run QKD again")
        segment = self._key[self._consumed:self._consumed + n].copy()
        self._consumed += n
        if 0 < self.remaining < LOW_KEY_WARNING:
            logger.warning(f"Key ledger nearly exhausted: {self.remaining} bits left")
        return segment


def encrypt(ledger: KeyLedger, message) -> Tuple[np.ndarray, KeyLedger]:
    """C = M xor S for the next len(M) unused key bits"""
    message = as_bits(message)
    return xor_bits(message, ledger.take(len(message))), ledger


def decrypt(ledger: KeyLedger, ciphertext) -> Tuple[np.ndarray, KeyLedger]:
    ciphertext = as_bits(ciphertext)
    return xor_bits(ciphertext, ledger.take(len(ciphertext))), ledger


def encrypt_hex(ledger: KeyLedger, message_hex: str) -> Tuple[str, KeyLedger]:
    ciphertext, ledger = encrypt(ledger, hex_to_bits(message_hex))
    return bits_to_hex(ciphertext), ledger


def decrypt_hex(ledger: KeyLedger, ciphertext_hex: str) -> Tuple[str, KeyLedger]:
    message, ledger = decrypt(ledger, hex_to_bits(ciphertext_hex))
    return bits_to_hex(message), ledger
