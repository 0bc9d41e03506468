"""Exception hierarchy shared by every ptgan module."""


class PtganError(Exception):
    """Base class for all package errors."""


class MalformedDocument(PtganError):
    pass


class WrongJointCount(PtganError):
    pass


class NegativeConfidence(PtganError):
    pass


class ZeroDims(PtganError):
    pass


class NoSharedVisibleJoints(PtganError):
    pass


class EmptyImage(PtganError):
    pass


class DimMismatch(PtganError):
    pass


class NonFiniteActivation(PtganError):
    pass


class NonFiniteLoss(PtganError):
    def __init__(self, message, components=None):
        super().__init__(message)
        self.components = dict(components or {})


class LabelOutOfRange(PtganError):
    pass


class RowNotNormalized(PtganError):
    pass


class WeightsUnavailable(PtganError):
    pass


class MissingFile(PtganError):
    pass


class ConfigError(PtganError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class CheckpointError(PtganError):
    pass
