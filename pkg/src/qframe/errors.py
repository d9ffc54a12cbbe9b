"""Exception hierarchy.

Everything raised on purpose by this package derives from QFrameError.
The three intermediate classes mirror the CLI's stable exit codes:
ConfigError -> 1, StorageError -> 2, ProviderError -> 3. Statistical
rejections are not exceptions; the validate command maps failed checks
to exit 4 itself.
"""


class QFrameError(Exception):
    """Base class for all package errors."""


class ConfigError(QFrameError):
    """Invalid configuration, parameters, or input shapes."""


class StorageError(QFrameError):
    """File, container, or codec level failure."""


class ProviderError(QFrameError):
    """Embedding service failure."""


# -- configuration / validation ------------------------------------------

class BudgetViolation(ConfigError):
    """Tier counts do not satisfy the exact token-budget identity."""


class NonPositiveTemperature(ConfigError):
    pass


class CandidateUnderflow(ConfigError):
    """Fewer candidates than selected frames (T < K+M+N)."""


class PresetUnavailable(ConfigError):
    pass


class NoExactSolution(ConfigError):
    """Budget not exactly representable by integer tier counts."""


class TooFewFrames(ConfigError):
    """Requested more candidates than the video has frames."""


class DimensionMismatch(ConfigError):
    pass


class NonFiniteScore(ConfigError):
    pass


class SelectionOverflow(ConfigError):
    """Requested more selections than available candidates."""


class LengthMismatch(ConfigError):
    pass


class BaseTooSmall(ConfigError):
    pass


class TargetTooSmall(ConfigError):
    pass


class ZeroVector(ConfigError):
    """A vector with (near-)zero norm cannot be normalized."""


class EnumerationTooLarge(ConfigError):
    pass


class SparseCells(ConfigError):
    """Expected chi-square cell counts below the validity floor."""


# -- storage ---------------------------------------------------------------

class IoFailure(StorageError):
    pass


class BadMagic(StorageError):
    pass


class UnsupportedVersion(StorageError):
    pass


class TruncatedPayload(StorageError):
    pass


class UndecodableContainer(StorageError):
    pass


class ZeroFrames(StorageError):
    pass


class IndexOutOfRange(StorageError):
    pass


class DecodeFailure(StorageError):
    pass


# -- provider --------------------------------------------------------------

class HttpFailure(ProviderError):
    pass


class Timeout(ProviderError):
    pass


class DimZero(ProviderError):
    pass


class PartialBatchFailure(ProviderError):
    """One or more batched requests failed; message names the batch."""
