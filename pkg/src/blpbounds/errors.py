"""Exception hierarchy.

The CLI maps each family onto an exit code: configuration problems exit 2,
data problems exit 3, numerical failures exit 4.
"""


class BlpError(Exception):
    exit_code = 4


class ConfigError(BlpError):
    exit_code = 2


class ParameterError(BlpError, ValueError):
    exit_code = 2


class DataError(BlpError):
    exit_code = 3


class RoleError(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ParseError(DataError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(BlpError):
    exit_code = 4


class SingularityError(NumericalError):
    pass


class SeparationError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class InformativenessError(NumericalError):
    pass


class ResolutionError(NumericalError):
    pass
