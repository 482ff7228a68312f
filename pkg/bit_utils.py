"""
Bit-string helpers.

A bit string is a one-dimensional ``numpy.uint8`` array holding 0/1 values.
Transcript payloads carry bit strings as a 4-byte big-endian length followed
by ``numpy.packbits`` output, so the exact number of disclosed bits can be
read back from the transcript.
"""

from typing import Dict, Iterable, Union

import numpy as np

BitsLike = Union[str, Iterable[int], np.ndarray]


def as_bits(value: BitsLike) -> np.ndarray:
    """Coerce '0101', a list of ints or an array into a uint8 bit array"""
    if isinstance(value, str):
        cleaned = value.replace(" ", "").replace("_", "")
        if cleaned and set(cleaned) - {"0", "1"}:
            raise ValueError(f"not a bit string: {value!r}")
        return np.fromiter((int(c) for c in cleaned), dtype=np.uint8, count=len(cleaned))
    bits = np.asarray(list(value) if not isinstance(value, np.ndarray) else value, dtype=np.int64).ravel()
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bit strings may only contain 0 and 1")
    return bits.astype(np.uint8)


def bits_to_str(bits: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in bits)


def hex_to_bits(text: str) -> np.ndarray:
    """Four bits per hex digit, most significant first"""
    text = text.strip().lower()
    if text.startswith("0x"):
        text = text[2:]
    try:
        values = [int(c, 16) for c in text]
    except ValueError:
        raise ValueError(f"not a hex string: {text!r}")
    out = np.zeros(4 * len(values), dtype=np.uint8)
    for i, v in enumerate(values):
        out[4 * i:4 * i + 4] = [(v >> 3) & 1, (v >> 2) & 1, (v >> 1) & 1, v & 1]
    return out


def bits_to_hex(bits: np.ndarray) -> str:
    """Hex digits of the bit string, zero-padded on the right to a nibble"""
    bits = as_bits(bits)
    pad = (-len(bits)) % 4
    padded = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    nibbles = padded.reshape(-1, 4) @ np.array([8, 4, 2, 1])
    return "".join(format(int(v), "x") for v in nibbles)


def encode_bitstring(bits: np.ndarray) -> Dict[str, object]:
    """JSON form of a bit string"""
    return {"length": int(len(bits)), "hex": bits_to_hex(bits)}


def pack_bits(bits: np.ndarray) -> bytes:
    bits = as_bits(bits)
    return len(bits).to_bytes(4, "big") + np.packbits(bits).tobytes()


def unpack_bits(payload: bytes) -> np.ndarray:
    length = int.from_bytes(payload[:4], "big")
    data = np.frombuffer(payload[4:], dtype=np.uint8)
    return np.unpackbits(data)[:length].astype(np.uint8)


def pack_indices(indices: Iterable[int]) -> bytes:
    return np.asarray(list(indices), dtype=">u4").tobytes()


def unpack_indices(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype=">u4").astype(np.int64)


def parity(bits: np.ndarray) -> int:
    return int(np.bitwise_xor.reduce(bits)) if len(bits) else 0


def xor_bits(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) != len(b):
        raise ValueError(f"cannot xor bit strings of length {len(a)} and {len(b)}")
    return np.bitwise_xor(as_bits(a), as_bits(b))
