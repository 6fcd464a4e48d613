"""Exception hierarchy shared across the package."""


class BapError(Exception):
    """Base class for all package-specific errors."""


# --- audio ---

class MalformedWav(BapError):
    pass


class UnsupportedEncoding(BapError):
    pass


class IoFailure(BapError):
    pass


class UpsampleRequested(BapError):
    pass


class InvalidCutoff(BapError):
    pass


class InvalidBand(BapError):
    pass


# --- spectral / enhance ---

class TooShort(BapError):
    pass


class TooFewFrames(BapError):
    pass


class BandOutOfRange(BapError):
    pass


# --- detect ---

class DegenerateData(BapError):
    pass


class MissingFeature(BapError):
    pass


class WrongLength(BapError):
    pass


class MalformedRules(BapError):
    pass


# --- cluster protocol ---

class FrameTooShort(BapError):
    pass


class UnknownTag(BapError):
    pass


class LengthMismatch(BapError):
    pass


class UnknownWorker(BapError):
    pass


class ProtocolViolation(BapError):
    pass
