"""Exception hierarchy shared by every module."""


class OpconcError(Exception):
    """Base class for all library errors."""


class DomainError(OpconcError, ValueError):
    """An argument lies outside the domain of a scalar or spectral function."""


class PreconditionError(OpconcError, ValueError):
    """A mathematical hypothesis of an operation is violated."""


class SymmetryError(OpconcError, ValueError):
    """A matrix is too far from symmetric to be symmetrized."""


class EigenSolverError(OpconcError, ArithmeticError):
    """The symmetric eigensolver failed to converge."""


class CatalogError(OpconcError, ValueError):
    """A (V-process, psi) pairing is not a known supermartingale construction."""


class ConfigError(OpconcError, ValueError):
    """A JSON config is malformed or fails schema validation."""


class EnumerationCapError(OpconcError, ValueError):
    """Exact enumeration refused because 2**n paths exceeds the cap."""
