"""Exception hierarchy; each class maps to a CLI exit-code category."""


class XMHashError(Exception):
    exit_code = 1
    category = "error"


class InputError(XMHashError, ValueError):
    """Malformed arguments: wrong shapes, bad enum values, empty names."""

    exit_code = 2
    category = "config"


class ConfigError(InputError):
    exit_code = 2
    category = "config"


class DataError(XMHashError, ValueError):
    """A dataset, manifest or checkpoint violates its invariants."""

    exit_code = 3
    category = "data"

    def __init__(self, message, *, instance_id=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if instance_id is not None:
            where.append(f"instance {instance_id!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.instance_id = instance_id
        self.line = line


class NumericError(XMHashError, ArithmeticError):
    exit_code = 4
    category = "numeric"


class ArtifactIOError(XMHashError, OSError):
    exit_code = 5
    category = "io"
