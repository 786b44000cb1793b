"""Error types for the homomorphic evaluation layer."""


class HeError(Exception):
    """Base class for HE-layer failures."""


class ParamError(HeError, ValueError):
    """Invalid or inconsistent scheme parameters."""


class BackendMismatchError(HeError):
    """Operands belong to different parameter sets or backends."""


class LevelExhaustedError(HeError):
    """A ciphertext-by-ciphertext multiply was requested at level 0."""


class NoiseExhaustedError(HeError):
    """Noise budget reached zero; decryption is no longer reliable."""


class KeyMismatchError(HeError):
    """Decryption attempted with a secret key from a different key set."""
