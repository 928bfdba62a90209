"""Semantic exception hierarchy shared by all privgen modules."""


class PrivgenError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(PrivgenError, ValueError):
    """An argument violates its contract (domain, shape, finiteness)."""


class DivergenceUndefinedError(PrivgenError):
    """Renyi divergence requested for distributions without the required support relation."""


class MalformedDocumentError(PrivgenError):
    """An annotated document violates its structural invariants."""


class DegenerateDocumentError(PrivgenError):
    """An operation that needs at least one privacy group got none."""


class BackendError(PrivgenError):
    """Base class for distribution-provider failures."""


class TransportError(BackendError):
    """The remote backend could not be reached or the connection broke."""


class ProtocolError(BackendError):
    """The remote backend answered with a malformed or incompatible message."""


class ContextTooLongError(BackendError):
    """The provider rejected a context that exceeds its limits."""


class UnsupportedOperationError(BackendError):
    """The provider does not advertise the capability needed for this call."""


class ScoringError(PrivgenError):
    """Teacher-forced scoring of a candidate failed; the instance is skippable."""


class GenerationAbortedError(PrivgenError):
    """Generation stopped on a backend failure; carries the invalid partial transcript.

    The partial transcript is only for diagnostics and must never be emitted
    as mechanism output.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
