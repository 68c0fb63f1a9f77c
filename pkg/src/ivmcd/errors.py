"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError (and plain ValueError)
is an input problem (exit 2), the numerical-degeneracy family exits 3.
"""


class IvmcdError(Exception):
    """Base class for library errors."""


class ValidationError(IvmcdError, ValueError):
    """Malformed data, configuration, or precondition violation."""


class SingularCovarianceError(IvmcdError, ArithmeticError):
    """A symbolic covariance matrix is singular or numerically indefinite."""


class DegenerateDataError(IvmcdError, ArithmeticError):
    """No usable subset/weighting exists (all starts singular, empty reweight)."""


class DegenerateSpreadError(IvmcdError, ArithmeticError):
    """A scale estimate (MAD) is zero, so standardization is impossible."""


class UnreliableFitError(IvmcdError, ArithmeticError):
    """Too few observations retain weight for a trustworthy robust fit."""
