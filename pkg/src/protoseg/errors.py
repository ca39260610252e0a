"""Exception hierarchy shared across the package."""


class ProtosegError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(ProtosegError):
    pass


class NotScalarError(ProtosegError):
    pass


class NonFiniteError(ProtosegError):
    pass


class EmptyForegroundError(ProtosegError):
    pass


class EmptyDescriptorSetError(ProtosegError):
    pass


class EmptyListError(ProtosegError):
    pass


class WrongLevelCountError(ProtosegError):
    pass


class ImageTooSmallError(ProtosegError):
    pass


class MissingGradientError(ProtosegError):
    pass


class InsufficientSamplesError(ProtosegError):
    pass


class UnknownClassError(ProtosegError):
    pass


class IndivisibleClassCountError(ProtosegError):
    pass


class FoldOverlapError(ProtosegError):
    pass


class ConfigError(ProtosegError):
    pass


class IoError(ProtosegError):
    pass
