"""
Deterministic, splittable random streams.

Every party, the channel and the public coin of a protocol session draw from
their own ``RandomStream``, all derived from one top-level seed. The
underlying bit generator is Philox (counter-based), keyed by a
``SeedSequence`` whose spawn key is the path of labels leading to the stream.
"""

import hashlib
import zlib
from typing import Optional, Tuple, Union

import numpy as np

SEED_MASK = (1 << 64) - 1

Label = Union[int, str]


def _label_key(label: Label) -> int:
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    if isinstance(label, (int, np.integer)) and label >= 0:
        return int(label)
    raise ValueError(f"Stream labels must be non-negative ints or strings, got {label!r}")


def derive_seed(*parts: Label) -> int:
    """64-bit seed from SHA-256 over the given parts (order matters)"""
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class RandomStream:
    """
    Single-writer random stream.

    Args:
        seed: non-negative integer, truncated to 64 bits
        path: spawn path below the root stream
    """

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed) & SEED_MASK
        self.path = tuple(path)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, path={self.path})"

    def spawn(self, *labels: Label) -> "RandomStream":
        """Independent child stream; the same labels always give the same child"""
        return RandomStream(self.seed, self.path + tuple(_label_key(label) for label in labels))

    def random(self) -> float:
        return float(self._generator.random())

    def bit(self) -> int:
        return int(self._generator.integers(0, 2))

    def bits(self, n: int) -> np.ndarray:
        return self._generator.integers(0, 2, size=n, dtype=np.uint8)

    def integers(self, low: int, high: int, size: Optional[int] = None):
        return self._generator.integers(low, high, size=size)

    def uniform(self, size: int) -> np.ndarray:
        return self._generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def sample_positions(self, n: int, k: int) -> np.ndarray:
        """k distinct positions out of range(n), sorted ascending"""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} positions out of {n}")
        return np.sort(self._generator.choice(n, size=k, replace=False))
