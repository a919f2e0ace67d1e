"""Exception hierarchy shared across the package."""


class RagBanditError(Exception):
    """Base class for all package errors."""


class ConfigError(RagBanditError, ValueError):
    """Invalid run, space or command-line configuration."""


class ReplayFormatError(RagBanditError, ValueError):
    """A replay file or its manifest is malformed or incomplete."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])


class EnvironmentFailure(RagBanditError):
    """An environment could not produce outcomes for a trial."""

    def __init__(self, message, trial=None):
        super().__init__(message)
        self.trial = trial


class RemoteTransportError(EnvironmentFailure):
    """Network-level failure talking to a remote evaluator. Retryable."""

    retryable = True


class RemoteSchemaError(EnvironmentFailure):
    """A remote evaluator answered with a payload that violates the outcome schema."""

    retryable = False
