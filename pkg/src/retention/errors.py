"""Exception types shared across the package."""


class RetentionError(Exception):
    """Base class for all package errors."""


class MissingColumn(RetentionError):
    pass


class BadEventCode(RetentionError):
    pass


class NonPositiveWaitingTime(RetentionError):
    pass


class OrphanVisit(RetentionError):
    pass


class NonPositiveDelta(RetentionError):
    pass


class EmptyStratum(RetentionError):
    pass


class NonPositiveTime(RetentionError):
    pass


class DimensionMismatch(RetentionError):
    pass


class NonFiniteValue(RetentionError):
    pass


class AllDivergent(RetentionError):
    pass


class TooFewChains(RetentionError):
    pass


class UnknownStratum(RetentionError):
    pass


class OneClassOnly(RetentionError):
    pass


class LengthMismatch(RetentionError):
    pass


class SingularInformation(RetentionError):
    pass


class ArtifactLoadError(RetentionError):
    pass


class BindError(RetentionError):
    """Could not bind the requested service address."""
