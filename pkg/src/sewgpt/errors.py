"""Exception hierarchy shared by the codec, model and CLI."""


class SewGPTError(Exception):
    """Base class for all package errors."""


class DomainError(SewGPTError, ValueError):
    pass


class EmptyDataset(SewGPTError):
    pass


class InvalidStitchGraph(SewGPTError):
    pass


class CodecError(SewGPTError):
    """Raised for anything that makes a pattern or token sequence unencodable."""


class PanelTooLarge(CodecError):
    pass


class SequenceTooLong(CodecError):
    pass


class MalformedSequence(CodecError):
    pass


class TokenOutOfRange(CodecError):
    pass


class ConfigError(SewGPTError):
    pass


class TrainingDiverged(SewGPTError):
    pass


class CheckpointError(SewGPTError):
    pass


class NotACheckpoint(CheckpointError):
    pass


class UnsupportedVersion(CheckpointError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class UnknownCaption(SewGPTError, KeyError):
    pass


class DecodeWarning(UserWarning):
    """A panel or stitch could not be reconstructed; decoding carried on."""
