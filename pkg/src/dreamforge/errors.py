"""Exception hierarchy shared across the package.

CLI exit-code mapping: ConfigError -> 2, provider-caused failures -> 3,
degenerate-data conditions -> 4.
"""


class DreamforgeError(Exception):
    """Base class for all package errors."""


class ConfigError(DreamforgeError):
    """Invalid or unloadable configuration."""


class ProviderError(DreamforgeError):
    """A provider call failed at the transport or protocol level."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class StageFailure(DreamforgeError):
    """A pipeline stage could not complete and the run was halted."""


class DegenerateDataError(DreamforgeError):
    """Input data admits no meaningful result (e.g. all-equal gate scores)."""


class MalformedMaskError(DreamforgeError):
    """Run-length data is inconsistent with the declared mask geometry."""


class DatasetExportError(DreamforgeError):
    """Dataset could not be exported (e.g. duplicate image ids)."""


class DatasetImportError(DreamforgeError):
    """Dataset file is malformed or fails its checksum."""


class ContractViolation(DreamforgeError):
    """A call broke a documented precondition (wrong class, wrong source...)."""


class UndefinedUncertaintyError(DreamforgeError):
    """Uncertainty requested for an object with an empty mask."""


class UndefinedLossError(DreamforgeError):
    """Alignment loss requested for a zero-norm feature vector."""


class EmptyBankError(DreamforgeError):
    """Prototype requested from a memory bank with no entries."""


class LayoutInductionError(DreamforgeError):
    """Layout induction produced no parseable output within the retry budget."""
