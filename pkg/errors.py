"""Exception hierarchy shared by the pipeline stages.

Every error carries a stable ``code`` and the process ``exit_code`` the CLI
uses when the error escapes a command.
"""

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class PipelineError(Exception):
    """Base class for every pipeline failure."""

    code = "PIPELINE"
    exit_code = EXIT_INTERNAL


# Configuration errors (exit 2)

class ConfigError(PipelineError):
    code = "BAD_CONFIG"
    exit_code = EXIT_CONFIG


class BadMappingError(ConfigError):
    code = "BAD_MAPPING"


class UnknownAttributeError(ConfigError):
    code = "UNKNOWN_ATTRIBUTE"


class OracleLimitError(ConfigError):
    code = "ORACLE_LIMIT"


# Missing or invalid input data (exit 3)

class DataError(PipelineError):
    code = "BAD_DATA"
    exit_code = EXIT_DATA


class InputReadError(DataError):
    code = "IO"


class EmptyDatasetError(DataError):
    code = "EMPTY_DATASET"


class EmptyWindowError(DataError):
    code = "EMPTY_WINDOW"


class NoCommonUsersError(DataError):
    code = "NO_COMMON_USERS"


class EmptyInputError(DataError):
    code = "EMPTY_INPUT"


class UnknownUserError(DataError):
    code = "UNKNOWN_USER"


class FormatVersionError(DataError):
    code = "BAD_FORMAT"


# Internal invariant violations (exit 4)

class InvariantViolation(PipelineError):
    code = "INVARIANT"


class EmptyBehaviourError(InvariantViolation):
    code = "EMPTY_BEHAVIOUR"
