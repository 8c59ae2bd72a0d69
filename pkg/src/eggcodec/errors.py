"""Exception taxonomy shared across the package.

The CLI maps these onto distinct process exit codes, so keeping the
hierarchy small and explicit matters more than usual.
"""


class EggCodecError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EggCodecError):
    """Malformed or inconsistent configuration input."""


class DataError(EggCodecError):
    """Corpus, file-format, or schema problem in input data."""


class WavFormatError(DataError):
    """WAV container present but encoding is not PCM16/float32 mono."""


class WavChannelError(DataError):
    """WAV file has more than one channel."""


class CheckpointError(DataError):
    """Checkpoint file unreadable or structurally invalid."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version not supported by this reader."""


class NumericError(EggCodecError):
    """Non-finite value encountered where the pipeline requires finiteness."""


class DegenerateSignalError(NumericError):
    """An operation received an input it is mathematically undefined on
    (zero-norm vector for cosine distance, zero-variance waveform for
    correlation, no comparable frames for a metric)."""


class UndefinedMetricError(DegenerateSignalError):
    """Metric has an empty denominator for the given track pair."""


class CheckFailure(EggCodecError):
    """A registered verification check exceeded its tolerance."""
