"""Exception types shared across the package."""


class RdtnError(Exception):
    """Base class for all package errors."""


class DomainError(RdtnError, ValueError):
    """Argument outside the validated envelope of a routine."""


class NearHankelZeroError(RdtnError, ArithmeticError):
    """Hankel function value is numerically zero relative to its neighbours."""

    def __init__(self, message, order=None, argument=None):
        super().__init__(message)
        self.order = order
        self.argument = argument


class MeshError(RdtnError):
    """Mesh generation, refinement or validation failure."""


class MeshParseError(MeshError):
    """Malformed mesh file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AssemblyError(RdtnError):
    """Finite element assembly failure (degenerate element, bad input)."""


class SingularMatrixError(RdtnError, ArithmeticError):
    """Sparse LU hit an exactly singular pivot."""


class EigensolverError(RdtnError):
    """Contour eigensolver failure (probe deficiency, repeated node failure)."""


class ConfigError(RdtnError, ValueError):
    """Invalid run configuration."""
