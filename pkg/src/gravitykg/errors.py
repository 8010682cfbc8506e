"""Exception hierarchy shared across the package."""


class GravityKGError(Exception):
    """Base class for all package errors."""


class InvalidLabel(GravityKGError, ValueError):
    pass


class SchemaError(GravityKGError, ValueError):
    pass


class RowError(GravityKGError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class AmbiguousCovariates(GravityKGError, ValueError):
    pass


class DomainError(GravityKGError, ValueError):
    pass


class SingularDistance(DomainError):
    pass


class InfeasibleK(GravityKGError, ValueError):
    pass


class EmptyGraph(GravityKGError, ValueError):
    pass


class EmptyData(GravityKGError, ValueError):
    pass


class ShapeError(GravityKGError, ValueError):
    pass


class UnknownEntity(GravityKGError, KeyError):
    def __str__(self):
        # KeyError repr-quotes its message; keep it readable.
        return str(self.args[0]) if self.args else ""


class ConfigError(GravityKGError, ValueError):
    pass


class InsufficientNegatives(GravityKGError, ValueError):
    pass
