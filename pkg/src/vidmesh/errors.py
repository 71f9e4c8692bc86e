"""Exception taxonomy for the vidmesh engine.

Three families map onto the CLI exit codes: usage problems (argparse handles
those), backend failures (exit 2), and data errors (exit 3).
"""


class VidmeshError(Exception):
    """Base class for all engine errors."""


class DataError(VidmeshError):
    """Malformed or inconsistent input data. CLI exit code 3."""


class EmptyVideo(DataError):
    pass


class DuplicateHumanId(DataError):
    pass


class PromptOutOfBounds(DataError):
    pass


class InconsistentFrameSize(DataError):
    pass


class CorruptRle(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class InsufficientFrames(DataError):
    pass


class BackendError(VidmeshError):
    """Backend unreachable or misbehaving. CLI exit code 2."""


class BackendUnavailable(BackendError):
    pass


class BackendProtocolError(BackendError):
    def __init__(self, message, code=None):
        super().__init__(message)
        self.code = code


class IdentityCountMismatch(BackendError):
    """Backend returned the wrong number of instances for a frame."""


class LayoutMismatch(BackendError):
    """Backend response dimensions disagree with its handshake layout."""


class ProtocolError(VidmeshError):
    """Wire-level encode/decode failures."""


class MalformedJson(ProtocolError):
    pass


class UnknownType(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class UnencodableValue(ProtocolError):
    pass
