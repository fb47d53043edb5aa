"""Exception hierarchy shared across the package.

CLI exit codes map onto these groups: configuration problems exit 1,
data problems exit 2, numerical failures exit 3.
"""


class EtipanelError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EtipanelError):
    """Invalid run configuration (bad grid, paths, option combinations)."""


class DomainError(EtipanelError, ValueError):
    """An input value lies outside the mathematical domain of an operation."""


class ConvexityViolation(DomainError):
    """Marginal rates decrease, or slopes increase: the budget set is not convex."""


class ParseError(EtipanelError):
    """A CSV row is malformed; the message names file and line number."""


class JoinError(EtipanelError):
    """An outcome row has no matching budget set for its (id, year)."""


class SingularSystem(EtipanelError):
    """A per-individual linear system is singular within tolerance.

    Raised at ``lam = 0`` when an individual's second-moment matrix is not
    invertible; the caller may raise ``lam`` or drop the individual.
    """

    def __init__(self, message, ids=()):
        super().__init__(message)
        self.ids = tuple(ids)


class NonInvertibleWbar(EtipanelError):
    """The averaged shrinkage matrix is singular: sample-wide identification failure."""


class GridError(EtipanelError):
    """A held-out evaluation point falls outside the interpolation grid."""
