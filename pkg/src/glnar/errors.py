"""Exception hierarchy. Each family maps to a CLI exit code."""


class GlnarError(Exception):
    exit_code = 1


class ConfigError(GlnarError):
    exit_code = 2


class DataError(GlnarError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.path = path


class EstimationError(GlnarError):
    exit_code = 4


class StateError(EstimationError):
    pass


class EvaluationError(GlnarError):
    exit_code = 5


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""
