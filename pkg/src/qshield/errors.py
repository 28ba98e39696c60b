"""Exception types shared across the package.

Everything raised on purpose derives from QShieldError so callers (and the
CLI) can distinguish our diagnostics from genuine bugs.
"""


class QShieldError(Exception):
    """Base class for all deliberate qshield errors."""


class ShapeMismatch(QShieldError):
    """An array had the wrong shape or size for the requested operation."""


class ZeroVector(QShieldError):
    """Amplitude encoding was asked to normalize an all-zero vector."""


class QubitOutOfRange(QShieldError):
    """A gate addressed a qubit index outside the register."""


class BadMagic(QShieldError):
    """A binary file did not start with the expected magic number."""


class BadVersion(QShieldError):
    """A checkpoint declared a format version this code does not read."""


class TruncatedPayload(QShieldError):
    """A binary file ended before its declared payload did."""


class TrailingBytes(QShieldError):
    """A binary file kept going after its declared payload ended."""


class ChecksumMismatch(QShieldError):
    """Stored CRC32 does not match the bytes actually read."""


class LabelOutOfRange(QShieldError):
    """A label file contained a value outside 0..9."""


class InsufficientSamples(QShieldError):
    """A subset request asked for more per-class samples than exist."""
