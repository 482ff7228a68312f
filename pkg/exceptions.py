"""Error types raised by the simulator."""


class QKDSimError(Exception):
    """Base class for every error raised by qkdsim"""


class NormalizationError(QKDSimError, ValueError):
    """Amplitudes do not have unit norm"""


class ArityError(QKDSimError, ValueError):
    """Operation received a state with the wrong number of qubits"""


class LengthMismatch(QKDSimError, ValueError):
    """Paired bit strings or lists differ in length"""


class InsufficientData(QKDSimError):
    """Too few sifted rounds to estimate parameters"""


class DomainError(QKDSimError, ValueError):
    """Argument outside the mathematical domain of the function"""


class SeedLengthError(QKDSimError, ValueError):
    """Toeplitz seed does not match in_len + out_len - 1"""


class LengthError(QKDSimError, ValueError):
    """Requested output longer than the input"""


class KeyExhausted(QKDSimError):
    """Not enough unused one-time-pad key; run QKD again"""


class ConfigError(QKDSimError, ValueError):
    """Invalid protocol or experiment configuration"""
