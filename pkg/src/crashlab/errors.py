"""Exception types raised by the library."""

from __future__ import annotations


class CrashlabError(Exception):
    """Base class for all library errors."""


class DuplicateNameError(CrashlabError):
    """A sibling with that name is already live."""


class DeadParentError(CrashlabError):
    """Spawn target parent is stopped or unknown."""


class MailboxOverflowError(CrashlabError):
    """Receiver mailbox is at capacity; the envelope went to dead letters."""


class TickBudgetExhausted(CrashlabError):
    """Run exceeded its tick budget; carries the partial trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class TargetNotFoundError(CrashlabError):
    """Referenced actor does not exist or is stopped."""


class AllTargetsDeadError(CrashlabError):
    """Every routing target is stopped."""


class NoVersionsError(CrashlabError):
    """No version registered for the type name."""


class NoOlderVersionError(CrashlabError):
    """Already at the oldest registered version."""


class VersionMissingError(CrashlabError):
    """Rollout refers to a version that was never registered."""


class DuplicateAnalyzerError(CrashlabError):
    """Analyzer name already registered."""


class DuplicatePluginError(CrashlabError):
    """Strategy plugin name already registered."""


class ConfigError(CrashlabError):
    """Scenario config is invalid; carries the offending location."""

    def __init__(self, location, message):
        super().__init__(f"{location}: {message}")
        self.location = location
