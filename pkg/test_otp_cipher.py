import itertools
from collections import Counter

import numpy as np
import pytest

from bit_utils import as_bits, bits_to_str
from exceptions import KeyExhausted
from otp_cipher import KeyLedger, decrypt, decrypt_hex, encrypt, encrypt_hex


def test_encrypt_example():
    ciphertext, ledger = encrypt(KeyLedger("0110"), "1010")
    assert bits_to_str(ciphertext) == "1100"
    assert ledger.consumed == 4 and ledger.remaining == 0


def test_decrypt_example():
    message, _ = decrypt(KeyLedger("0110"), "1100")
    assert bits_to_str(message) == "1010"


def test_peer_ledgers_round_trip():
    key = "1100101011110000"
    alice, bob = KeyLedger(key), KeyLedger(key)
    for message in ("101", "0000", "111111111"):
        ciphertext, _ = encrypt(alice, message)
        plain, _ = decrypt(bob, ciphertext)
        assert bits_to_str(plain) == message
    assert alice.consumed == bob.consumed == 16


def test_ciphertext_covers_every_string():
    message = as_bits("101")
    ciphertexts = {bits_to_str(encrypt(KeyLedger(key), message)[0]) for key in itertools.product([0, 1], repeat=3)}
    assert ciphertexts == {"".join(bits) for bits in itertools.product("01", repeat=3)}


@pytest.mark.parametrize("length", [1, 2, 3, 4])
def test_perfect_secrecy(length):
    keys = list(itertools.product([0, 1], repeat=length))

    def distribution(message):
        return Counter(bits_to_str(encrypt(KeyLedger(key), message)[0]) for key in keys)

    messages = list(itertools.product([0, 1], repeat=length))
    reference = distribution(messages[0])
    for message in messages[1:]:
        assert distribution(message) == reference


def test_empty_message_leaves_ledger_alone():
    ledger = KeyLedger("0101")
    message, returned = decrypt(ledger, "")
    assert len(message) == 0
    assert returned is ledger and ledger.consumed == 0


def test_key_is_never_reused():
    ledger = KeyLedger("10110011")
    encrypt(ledger, "1111")
    encrypt(ledger, "11")
    with pytest.raises(KeyExhausted):
        encrypt(ledger, "111")
    # the failed call consumed nothing
    assert ledger.consumed == 6
    encrypt(ledger, "11")
    with pytest.raises(KeyExhausted):
        decrypt(ledger, "1")


def test_returned_ledger_is_the_same_object():
    ledger = KeyLedger("1010")
    _, after = encrypt(ledger, "10")
    assert after is ledger
    _, again = encrypt(ledger, "10")
    assert again.consumed == 4
    with pytest.raises(KeyExhausted):
        encrypt(after, "1")


def test_extend_with_fresh_key():
    ledger = KeyLedger("11")
    encrypt(ledger, "00")
    ledger.extend(np.array([0, 1, 1], dtype=np.uint8))
    ciphertext, _ = encrypt(ledger, "000")
    assert bits_to_str(ciphertext) == "011"
    assert len(ledger.key) == 5


def test_key_view_is_read_only():
    ledger = KeyLedger("1010")
    with pytest.raises(ValueError):
        ledger.key[0] = 0


def test_bad_offset():
    with pytest.raises(ValueError):
        KeyLedger("10", consumed=3)


def test_hex_helpers():
    key = as_bits("0110" * 4)
    ciphertext, _ = encrypt_hex(KeyLedger(key), "a5f0")
    message, _ = decrypt_hex(KeyLedger(key), ciphertext)
    assert message == "a5f0"
    assert ciphertext == "c396"
