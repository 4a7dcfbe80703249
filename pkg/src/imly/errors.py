"""Exception hierarchy shared across the package.

Split between usage errors (bad arguments, bad configuration) and data
errors (malformed files, infeasible inputs) so the CLI can map them to
distinct exit codes.
"""


class ImlyError(Exception):
    """Base class for all package errors."""


class ConfigError(ImlyError):
    """Invalid configuration value or combination."""


class DataError(ImlyError):
    """Malformed or unusable input data."""


class WavFormatError(DataError):
    """RIFF/WAVE header is malformed."""


class UnsupportedCodecError(DataError):
    """WAV codec other than PCM16 / IEEE float32, or channel count > 2."""


class TruncatedDataError(DataError):
    """WAV data chunk is shorter than its declared size."""


class AudioTooShortError(DataError):
    """Input audio is too short for the requested operation."""


class LexiconError(DataError):
    """Pronunciation lexicon could not be parsed."""


class InfeasibleTargetError(DataError):
    """CTC target cannot be aligned to the available frames."""


class CacheMissError(ImlyError):
    """Requested a re-decode for an input that is no longer cached."""
