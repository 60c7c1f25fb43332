"""Exception hierarchy.  CLI exit codes key off the two top-level branches."""


class PPSurvError(Exception):
    pass


class ConfigError(PPSurvError, ValueError):
    """Invalid input or configuration (CLI exit code 2)."""


class SchemaError(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DomainError(ConfigError):
    pass


class PartitionError(ConfigError):
    pass


class SummaryError(ConfigError):
    pass


class RuntimeFailure(PPSurvError, RuntimeError):
    """Failure while sampling or simulating (CLI exit code 3)."""


class DegenerateConditionalError(RuntimeFailure):
    pass


class SamplerError(RuntimeFailure):
    pass


class FittingError(RuntimeFailure):
    pass


class ElicitationError(RuntimeFailure):
    pass


class DesignAbortedError(RuntimeFailure):
    def __init__(self, message, failed_seeds=()):
        super().__init__(message)
        self.failed_seeds = list(failed_seeds)
