"""Exception hierarchy shared by every augforge module."""


class AugforgeError(Exception):
    """Base class for all errors raised by augforge."""


class InvalidArgument(AugforgeError, ValueError):
    pass


class SilentSignalError(InvalidArgument):
    """The signal used as SNR reference has zero energy."""


class SilentNoiseError(InvalidArgument):
    """The noise that should be scaled to a target SNR has zero energy."""


class TooShortError(InvalidArgument):
    pass


class ConfigurationError(AugforgeError):
    pass


class TranscodeError(AugforgeError):
    """The external codec shim failed, timed out or returned unusable audio."""

    def __init__(self, message, returncode=None, stderr=""):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


class ManifestParseError(AugforgeError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class ScoringError(AugforgeError):
    pass


class UtteranceError(AugforgeError):
    """Wraps a failure for one utterance so the caller knows which one broke."""

    def __init__(self, utterance_id, cause):
        super().__init__(f"{utterance_id}: {cause}")
        self.utterance_id = utterance_id
        self.cause = cause
