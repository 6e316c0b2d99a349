class CheckpointError(ValueError):
    """Base class for everything that can go wrong reading or writing a BCQ1 file"""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedPayloadError(CheckpointError):
    pass


class BoundsError(CheckpointError):
    """Entry offsets overlap, run past the payload, or leave trailing bytes"""


class NonFiniteError(CheckpointError):
    pass


class DuplicateNameError(CheckpointError):
    pass
