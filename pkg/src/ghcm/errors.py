"""Exception types shared across the package."""


class GhcmError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GhcmError):
    """Invalid configuration or parameter combination."""


class ContractViolation(GhcmError):
    """A caller broke a documented precondition."""


class DomainError(GhcmError):
    """An observation or distance outside the family's domain."""


class AssumptionViolation(GhcmError):
    """A distribution family fails the assumptions required by the selected algorithm."""


class RecoveryFailure(GhcmError):
    """The recovery pipeline returned FAIL (disconnected block visibility graph)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
